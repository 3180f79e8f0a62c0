use clap::Parser;

fn main() {
    let cli = phasegen::cli::Cli::parse();
    let code = phasegen::cli::run(
        cli,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    std::process::exit(code);
}
