/// Mixed-radix indexing over a product of dense integer domains.
///
/// Cell indices are row-major: the last coordinate varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseDomain {
    sizes: Vec<u32>,
    strides: Vec<usize>,
    len: usize,
}

impl DenseDomain {
    /// Panics if the product of `sizes` overflows `usize`; callers check
    /// [`DenseDomain::cell_count`] against their caps first.
    pub fn new(sizes: Vec<u32>) -> Self {
        let mut strides = vec![0usize; sizes.len()];
        let mut acc = 1usize;
        for (i, &s) in sizes.iter().enumerate().rev() {
            strides[i] = acc;
            acc = acc
                .checked_mul(s as usize)
                .expect("dense domain size overflows usize");
        }
        DenseDomain {
            sizes,
            strides,
            len: acc,
        }
    }

    /// Number of cells without allocating strides; saturates instead of overflowing.
    pub fn cell_count(sizes: &[u32]) -> u128 {
        sizes
            .iter()
            .fold(1u128, |acc, &s| acc.saturating_mul(s as u128))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn encode(&self, tuple: &[u32]) -> usize {
        tuple
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| v as usize * s)
            .sum()
    }

    pub fn decode(&self, mut index: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.sizes.len()];
        for (slot, &stride) in out.iter_mut().zip(&self.strides) {
            *slot = (index / stride) as u32;
            index %= stride;
        }
        out
    }

    /// Iterates every cell in index order.
    pub fn cells(&self) -> Cells<'_> {
        Cells {
            sizes: &self.sizes,
            current: if self.len == 0 {
                None
            } else {
                Some(vec![0; self.sizes.len()])
            },
        }
    }
}

pub struct Cells<'a> {
    sizes: &'a [u32],
    current: Option<Vec<u32>>,
}

impl Iterator for Cells<'_> {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().unwrap();
        let mut pos = cur.len();
        loop {
            if pos == 0 {
                self.current = None;
                break;
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < self.sizes[pos] {
                break;
            }
            cur[pos] = 0;
        }
        Some(out)
    }
}
