//! Confounded dataset construction: toy glyph images, the radial notch
//! confounder, contingency-controlled subsampling, oversampling and
//! grouped cross-validation splits.

mod contingency;
mod notch;
mod splits;
mod toy;

pub use contingency::{
    cell_counts, cell_index, confound_by_notch, largest_remainder, make_test_split, phi_coefficient, rebalance_oversample,
    subsample_contingency, ContingencySpec, Subsample, TestKind,
};
pub use notch::{apply_notch, apply_notch_image, NotchSpec};
pub use splits::{grouped_kfold, SplitPlan};
pub use toy::{generate_toy, Glyph, ToyGenerator};

/// One grayscale image with its primary label `y1`, confounder label `y2`
/// and a group identifier used to keep related samples in one fold.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub side: usize,
    /// Row-major `side × side`, values in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub y1: u8,
    pub y2: u8,
    pub group: u64,
}

impl LabeledImage {
    pub fn cell(&self) -> usize {
        cell_index(self.y1, self.y2)
    }
}
