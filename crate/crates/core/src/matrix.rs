/// Dense `K x M` matrix indexed by frequency bin (row) and microphone (column).
///
/// Row `r` holds bin `r + 1`; storage is row-major, matching the on-disk
/// bin-major, mic-minor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMatrix<T> {
    bins: usize,
    mics: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> BinMatrix<T> {
    pub fn zeros(bins: usize, mics: usize) -> Self {
        Self {
            bins,
            mics,
            data: vec![T::default(); bins * mics],
        }
    }
}

impl<T> BinMatrix<T> {
    pub fn from_vec(bins: usize, mics: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            bins * mics,
            "BinMatrix shape does not match data length"
        );
        Self { bins, mics, data }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_mics(&self) -> usize {
        self.mics
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.mics)
    }

    /// Row for bin `k` (1-based).
    pub fn bin(&self, k: usize) -> &[T] {
        &self.data[(k - 1) * self.mics..k * self.mics]
    }

    pub fn bin_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[(k - 1) * self.mics..k * self.mics]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.mics)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> BinMatrix<U> {
        BinMatrix {
            bins: self.bins,
            mics: self.mics,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for BinMatrix<T> {
    type Output = T;

    /// `(k, mic)` with `k` 1-based.
    fn index(&self, (k, mic): (usize, usize)) -> &T {
        &self.data[(k - 1) * self.mics + mic]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for BinMatrix<T> {
    fn index_mut(&mut self, (k, mic): (usize, usize)) -> &mut T {
        &mut self.data[(k - 1) * self.mics + mic]
    }
}
