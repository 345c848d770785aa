use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::preprocess::PatchSet;
use crate::{Error, Result};

/// The label store and iteration bookkeeping of one distillation run. All
/// per-image vectors are aligned with the training `PatchSet` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// 0 after initialization; `j` after the `j`-th E-step.
    pub iteration: usize,
    /// Diseased-patch ratio of the latest labels (`s0` before the first E-step).
    pub s_prev: f64,
    pub image_ids: Vec<String>,
    pub image_labels: Vec<u8>,
    pub labels: Vec<Vec<u8>>,
    /// Scores from the latest E-step; `None` until the first one.
    pub prev_scores: Option<Vec<Vec<f64>>>,
    /// Labels that flipped in the latest E-step.
    pub change_count: usize,
    pub checkpoint: Option<String>,
}

/// Broadcasts each image label to all of its patches.
pub fn init_labels(train: &[PatchSet], s0: f64) -> Result<TrainState> {
    if train.is_empty() {
        return Err(Error::Empty("training split has no images"));
    }
    if !(s0 > 0.0 && s0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("s0 must lie in (0,1], got {s0}")));
    }
    Ok(TrainState {
        iteration: 0,
        s_prev: s0,
        image_ids: train.iter().map(|p| p.image_id.clone()).collect(),
        image_labels: train.iter().map(|p| p.image_label).collect(),
        labels: train.iter().map(|p| vec![p.image_label; p.m()]).collect(),
        prev_scores: None,
        change_count: 0,
        checkpoint: None,
    })
}

impl TrainState {
    pub fn total_patches(&self) -> usize {
        self.labels.iter().map(Vec::len).sum()
    }

    pub fn positive_patches(&self) -> usize {
        self.labels.iter().flatten().filter(|&&l| l == 1).count()
    }

    /// Diseased-patch ratio of the current labels, without the zero floor.
    pub fn positive_ratio(&self) -> f64 {
        self.positive_patches() as f64 / self.total_patches().max(1) as f64
    }

    fn index_of(&self, image_id: &str) -> Option<usize> {
        self.image_ids.iter().position(|id| id == image_id)
    }

    pub fn labels_of(&self, image_id: &str) -> Option<&[u8]> {
        self.index_of(image_id).map(|i| self.labels[i].as_slice())
    }

    pub fn scores_of(&self, image_id: &str) -> Option<&[f64]> {
        let i = self.index_of(image_id)?;
        self.prev_scores.as_ref().map(|s| s[i].as_slice())
    }

    /// Normal images carry only 0 labels and every diseased image keeps at
    /// least one diseased patch.
    pub fn check_invariants(&self) -> Result<()> {
        for ((id, &y), labels) in self.image_ids.iter().zip(&self.image_labels).zip(&self.labels) {
            if y == 0 && labels.iter().any(|&l| l != 0) {
                return Err(Error::Contract(format!("normal image {id} has a diseased patch label")));
            }
            if y == 1 && !labels.contains(&1) {
                return Err(Error::Contract(format!("diseased image {id} lost all diseased patches")));
            }
        }
        if !(self.s_prev > 0.0 && self.s_prev <= 1.0) {
            return Err(Error::Contract(format!("s_prev {} outside (0,1]", self.s_prev)));
        }
        Ok(())
    }

    /// Copies labels and latest scores back into the patch sets.
    pub fn apply_to(&self, sets: &mut [PatchSet]) -> Result<()> {
        if sets.len() != self.labels.len() {
            return Err(Error::mismatch(format!("{} patch sets", self.labels.len()), sets.len()));
        }
        for (i, set) in sets.iter_mut().enumerate() {
            if set.image_id != self.image_ids[i] {
                return Err(Error::mismatch(&self.image_ids[i], &set.image_id));
            }
            set.working_labels = self.labels[i].clone();
            set.scores = self.prev_scores.as_ref().map(|s| s[i].clone());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Raster;

    fn set(id: &str, label: u8) -> PatchSet {
        PatchSet::from_image(id, label, &Raster::new(256, 192, 1), 64).unwrap()
    }

    #[test]
    fn broadcast_initialization() {
        let st = init_labels(&[set("a", 1), set("b", 0)], 0.5).unwrap();
        assert_eq!(st.labels[0], [1; 12]);
        assert_eq!(st.labels[1], [0; 12]);
        assert_eq!(st.s_prev, 0.5);
        assert!(st.prev_scores.is_none());
        assert_eq!(st.iteration, 0);
        st.check_invariants().unwrap();
        assert!(init_labels(&[], 0.5).is_err());
    }

    #[test]
    fn only_normal_images() {
        let st = init_labels(&[set("a", 0), set("b", 0)], 0.5).unwrap();
        assert_eq!(st.positive_patches(), 0);
    }

    #[test]
    fn full_scale_initial_ratio_is_close_to_half() {
        // 5,140 diseased and 5,000 normal images with 12 patches each.
        let positives = 5140 * 12;
        let total = (5140 + 5000) * 12;
        assert_eq!((positives, total), (61_680, 121_680));
        let ratio = positives as f64 / total as f64;
        assert!((ratio - 0.5069).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn apply_to_writes_back() {
        let mut sets = [set("a", 1), set("b", 0)];
        let mut st = init_labels(&sets, 0.5).unwrap();
        st.labels[0][3] = 0;
        st.prev_scores = Some(vec![vec![0.2; 12], vec![0.1; 12]]);
        st.apply_to(&mut sets).unwrap();
        assert_eq!(sets[0].working_labels[3], 0);
        assert_eq!(sets[1].scores.as_deref(), Some(&[0.1; 12][..]));
        assert_eq!(st.labels_of("a").unwrap()[3], 0);
        assert_eq!(st.scores_of("b").unwrap()[0], 0.1);
    }
}
