use super::TensorError;

/// Node → graph assignment for a block-diagonal batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    ids: Vec<usize>,
    n_segments: usize,
}

impl Segments {
    pub fn new(ids: Vec<usize>, n_segments: usize) -> Result<Self, TensorError> {
        if let Some(&bad) = ids.iter().find(|&&s| s >= n_segments) {
            return Err(TensorError::IndexOutOfBounds {
                op: "segments",
                index: bad,
                bound: n_segments,
            });
        }
        Ok(Self { ids, n_segments })
    }

    /// Contiguous segments of the given sizes, in order.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let ids = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &n)| std::iter::repeat(g).take(n))
            .collect();
        Self {
            ids,
            n_segments: sizes.len(),
        }
    }

    /// Single segment covering `n` rows.
    pub fn single(n: usize) -> Self {
        Self::from_sizes(&[n])
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_segments];
        for &s in &self.ids {
            c[s] += 1;
        }
        c
    }

    /// Row indices belonging to each segment, in ascending row order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_segments];
        for (row, &s) in self.ids.iter().enumerate() {
            m[s].push(row);
        }
        m
    }

    pub(crate) fn check_nonempty(&self) -> Result<Vec<usize>, TensorError> {
        let counts = self.counts();
        match counts.iter().position(|&c| c == 0) {
            Some(segment) => Err(TensorError::EmptySegment { segment }),
            None => Ok(counts),
        }
    }
}
