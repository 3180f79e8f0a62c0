use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use phasegen::io::stream_batches;
use phasegen::signalgen::{Generator, GeneratorConfig};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

fn peak_while_streaming(generator: &Arc<Generator>, count: u64) -> usize {
    let base = LIVE.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let mut seen = 0;
    for batch in stream_batches(Arc::clone(generator), 1, 128, Some(count)) {
        let batch = batch.unwrap();
        assert_eq!(batch.provenance.batch_index, seen);
        seen += 1;
    }
    assert_eq!(seen, count);
    PEAK.load(Ordering::SeqCst) - base
}

#[test]
fn streaming_memory_does_not_grow_with_batch_count() {
    let generator = Arc::new(Generator::new(GeneratorConfig::default()).unwrap());
    // warm up thread pools and lazily initialized state
    peak_while_streaming(&generator, 1);
    let one = peak_while_streaming(&generator, 1);
    let hundred = peak_while_streaming(&generator, 100);
    let batch_bytes = 128 * 256 * 4 * 4;
    assert!(one >= batch_bytes, "peak {one} below one batch");
    assert!(
        hundred <= one + one / 2,
        "peak grew from {one} to {hundred} bytes"
    );
}
