//! Small floating-point helpers shared by the modules.

/// Below this length a plain left-to-right loop is used.
const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (tree) summation. The association order depends only on the
/// slice length, so equal inputs always give bit-identical sums.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `Σ w_i · f(x_i)` over `(x_i, w_i)` pairs with pairwise summation.
pub(crate) fn weighted_sum<I>(terms: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut buf: smallbuf::Buf = smallbuf::Buf::new();
    for t in terms {
        buf.push(t);
    }
    pairwise_sum(buf.as_slice())
}

pub(crate) fn powf(x: f64, p: f64) -> f64 {
    libm::pow(x, p)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Index of the first maximum; `None` for an empty slice.
pub(crate) fn first_argmax(xs: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best
}

mod smallbuf {
    use alloc::vec::Vec;

    const INLINE: usize = 16;

    /// Stack buffer that spills to the heap; member expectations rarely have
    /// more than a handful of atoms.
    pub(crate) struct Buf {
        inline: [f64; INLINE],
        len: usize,
        heap: Vec<f64>,
    }

    impl Buf {
        pub(crate) fn new() -> Self {
            Buf {
                inline: [0.0; INLINE],
                len: 0,
                heap: Vec::new(),
            }
        }

        pub(crate) fn push(&mut self, x: f64) {
            if self.len < INLINE {
                self.inline[self.len] = x;
            } else {
                if self.heap.is_empty() {
                    self.heap.extend_from_slice(&self.inline);
                }
                self.heap.push(x);
            }
            self.len += 1;
        }

        pub(crate) fn as_slice(&self) -> &[f64] {
            if self.len <= INLINE {
                &self.inline[..self.len]
            } else {
                &self.heap
            }
        }
    }
}
