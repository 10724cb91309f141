use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::trajectory::{Category, Frame};

/// Annotation counts gathered while parsing, including objects that have no
/// cuboid and therefore never become part of a [`Frame`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawCounts {
    pub box2d: u64,
    pub box3d: u64,
    /// One entry per object observation (per frame), cuboid or not.
    pub per_class: BTreeMap<Category, u64>,
    pub tracks: BTreeSet<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub frame_count: u64,
    pub box2d_count: u64,
    pub box3d_count: u64,
    pub track_count: u64,
    pub per_class: BTreeMap<Category, u64>,
}

impl DatasetStats {
    pub fn observation_count(&self) -> u64 {
        self.per_class.values().sum()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("frames", self.frame_count),
            ("2D boxes", self.box2d_count),
            ("3D boxes", self.box3d_count),
            ("tracks", self.track_count),
            ("observations", self.observation_count()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<20} {v:>10}");
        }
        for (c, n) in &self.per_class {
            let _ = writeln!(out, "  {:<18} {n:>10}", c.as_str());
        }
        out
    }
}

/// Dataset statistics.
///
/// With `raw` counts (from an OpenLABEL parse) the box, class and track
/// tallies come from the document; without them everything is derived from
/// the frames, where every object counts as one 3D box.
pub fn compute_stats(frames: &[Frame], raw: Option<&RawCounts>) -> DatasetStats {
    let frame_count = frames.len() as u64;
    match raw {
        Some(raw) => DatasetStats {
            frame_count,
            box2d_count: raw.box2d,
            box3d_count: raw.box3d,
            track_count: raw.tracks.len() as u64,
            per_class: raw.per_class.clone(),
        },
        None => {
            let mut per_class = BTreeMap::new();
            let mut tracks = BTreeSet::new();
            let mut boxes = 0;
            for o in frames.iter().flat_map(|f| &f.objects) {
                *per_class.entry(o.category).or_default() += 1;
                tracks.insert(o.track_id);
                boxes += 1;
            }
            DatasetStats {
                frame_count,
                box2d_count: 0,
                box3d_count: boxes,
                track_count: tracks.len() as u64,
                per_class,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Dimensions, TrackedObject};

    #[test]
    fn empty_input_is_all_zero() {
        assert_eq!(compute_stats(&[], None), DatasetStats::default());
        assert_eq!(compute_stats(&[], Some(&RawCounts::default())), DatasetStats::default());
    }

    #[test]
    fn derived_counts_are_permutation_invariant() {
        let mk = |idx: u64, ids: &[(u64, Category)]| {
            let mut f = Frame::new(idx, idx as f64, "s");
            for &(id, c) in ids {
                f.objects.push(TrackedObject::new(id, c, [0.0; 3], Dimensions::new(4.0, 2.0, 1.5), 0.0, None).unwrap());
            }
            f
        };
        let mut frames = vec![
            mk(0, &[(1, Category::Car), (2, Category::Truck)]),
            mk(1, &[(1, Category::Car)]),
            mk(2, &[(3, Category::Pedestrian)]),
        ];
        let a = compute_stats(&frames, None);
        frames.reverse();
        assert_eq!(compute_stats(&frames, None), a);
        assert_eq!(a.frame_count, 3);
        assert_eq!(a.track_count, 3);
        assert_eq!(a.observation_count(), 4);
        assert_eq!(a.per_class[&Category::Car], 2);
        assert!(a.to_table().contains("pedestrian"));
    }
}
