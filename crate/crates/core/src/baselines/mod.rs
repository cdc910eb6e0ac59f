//! Reference completion methods: PCA subspace imputation and a naive
//! static-heart baseline.

pub mod pca;

pub use pca::{load_pca, pca_complete, pca_fit, save_pca, PcaModel, DEFAULT_COMPONENTS};

use crate::datakit::{AnatomySequence, SegVolume};
use crate::error::Result;

/// Repeats the first frame over the whole cycle.
pub fn copy_frame0(
    x0: &SegVolume,
    t_frames: usize,
    frame_period_s: f64,
) -> Result<AnatomySequence> {
    AnatomySequence::new(vec![x0.clone(); t_frames], frame_period_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_repeats_frame() {
        let x0 = SegVolume::background([2, 2, 2], [1.0; 3]).unwrap();
        let s = copy_frame0(&x0, 4, 0.04).unwrap();
        assert_eq!(s.t_frames(), 4);
        assert!(s.frames().iter().all(|f| f == &x0));
    }
}
