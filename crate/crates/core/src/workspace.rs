//! Orientation-workspace sweeps over a yaw/pitch/roll box.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::differential::{build_jacobians_with_threshold, classify_singularity, SingularityKind, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::Orientation;
use crate::kinematics::solve_ik;
use crate::mechanism::{BranchFlags, JointAngles, MechanismParams};

/// Biomimetic envelope half-widths in degrees: yaw, pitch, roll.
pub const ENVELOPE_DEG: [f64; 3] = [30.0, 15.0, 4.0];

/// Grid counts of the default 1°/1°/0.5° resolution.
pub const DEFAULT_COUNTS: [usize; 3] = [61, 31, 17];

/// Box of orientations `centre ⊕ offset`, offsets on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationBox {
    pub centre: Orientation,
    /// Offset intervals `[lo, hi]` in radians for yaw, pitch, roll.
    pub ranges: [[f64; 2]; 3],
    pub counts: [usize; 3],
}

impl OrientationBox {
    /// The ±30°/±15°/±4° envelope around the mechanism's home posture.
    pub fn envelope(m: &MechanismParams) -> Self {
        Self::envelope_with_counts(m, DEFAULT_COUNTS)
    }

    pub fn envelope_with_counts(m: &MechanismParams, counts: [usize; 3]) -> Self {
        let r = ENVELOPE_DEG.map(|d| [-d.to_radians(), d.to_radians()]);
        OrientationBox {
            centre: m.home_orientation(),
            ranges: r,
            counts,
        }
    }

    /// A one-cell box at `o`.
    pub fn single(o: Orientation) -> Self {
        OrientationBox {
            centre: o,
            ranges: [[0.0, 0.0]; 3],
            counts: [1, 1, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.contains(&0) {
            return Err(Error::InvalidInput("grid counts must be positive".into()));
        }
        for [lo, hi] in self.ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput("box ranges must be finite with lo <= hi".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis_value(&self, axis: usize, i: usize) -> f64 {
        let [lo, hi] = self.ranges[axis];
        let n = self.counts[axis];
        if n == 1 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    /// Grid indices of cell `index`, yaw fastest.
    pub fn indices(&self, index: usize) -> [usize; 3] {
        let [ny, np, _] = self.counts;
        [index % ny, (index / ny) % np, index / (ny * np)]
    }

    pub fn offset(&self, index: usize) -> Orientation {
        let [i, j, k] = self.indices(index);
        Orientation {
            yaw: self.axis_value(0, i),
            pitch: self.axis_value(1, j),
            roll: self.axis_value(2, k),
        }
    }

    pub fn orientation(&self, index: usize) -> Orientation {
        self.centre.offset_by(&self.offset(index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceCell {
    pub orientation: Orientation,
    pub reachable: bool,
    pub joints: Option<JointAngles>,
    pub branch: Option<BranchFlags>,
    pub normalized_det_a: Option<f64>,
    pub normalized_det_b: Option<f64>,
    pub kappa_paper: Option<f64>,
    pub kappa_exact: Option<f64>,
    pub singularity: Option<SingularityKind>,
    /// Error kind when the inverse model failed.
    pub error: Option<String>,
}

impl WorkspaceCell {
    pub fn margin(&self) -> Option<f64> {
        Some(self.normalized_det_a?.abs().min(self.normalized_det_b?.abs()))
    }

    pub fn is_singular(&self) -> bool {
        matches!(self.singularity, Some(k) if k != SingularityKind::NonSingular)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMap {
    pub bounds: OrientationBox,
    pub threshold: f64,
    pub cells: Vec<WorkspaceCell>,
}

pub fn evaluate_cell(m: &MechanismParams, o: Orientation, threshold: f64) -> WorkspaceCell {
    let unreachable = |kind: &str| WorkspaceCell {
        orientation: o,
        reachable: false,
        joints: None,
        branch: None,
        normalized_det_a: None,
        normalized_det_b: None,
        kappa_paper: None,
        kappa_exact: None,
        singularity: None,
        error: Some(kind.to_string()),
    };
    let set = match solve_ik(m, &o) {
        Ok(set) => set,
        Err(e) => return unreachable(e.kind()),
    };
    let Some(pose) = set.working_pose() else {
        return unreachable("NoRealSolution");
    };
    let dk = build_jacobians_with_threshold(pose, m, threshold);
    let report = classify_singularity(pose, m, threshold);
    WorkspaceCell {
        orientation: o,
        reachable: true,
        joints: Some(pose.joints),
        branch: Some(pose.branch),
        normalized_det_a: Some(dk.normalized_det_a),
        normalized_det_b: Some(dk.normalized_det_b),
        kappa_paper: Some(dk.kappa_paper),
        kappa_exact: Some(dk.kappa_exact),
        singularity: Some(report.kind),
        error: None,
    }
}

pub fn sweep_workspace(m: &MechanismParams, bounds: &OrientationBox) -> Result<WorkspaceMap> {
    sweep_workspace_with_threshold(m, bounds, DEFAULT_THRESHOLD)
}

/// Evaluates every cell; failures are recorded in the cell. Cells are in
/// index order regardless of how rayon schedules them.
pub fn sweep_workspace_with_threshold(
    m: &MechanismParams,
    bounds: &OrientationBox,
    threshold: f64,
) -> Result<WorkspaceMap> {
    bounds.validate()?;
    let cells = (0..bounds.len())
        .into_par_iter()
        .map(|i| evaluate_cell(m, bounds.orientation(i), threshold))
        .collect();
    Ok(WorkspaceMap {
        bounds: bounds.clone(),
        threshold,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64>) -> Option<Stats> {
        let mut n = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            n += 1;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        (n > 0).then(|| Stats {
            min,
            max,
            mean: sum / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCell {
    pub index: usize,
    pub orientation: Orientation,
    pub margin: f64,
    pub singularity: Option<SingularityKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSummary {
    pub cells: usize,
    pub reachable_fraction: f64,
    pub singularity_free_fraction: f64,
    pub det_a_abs: Option<Stats>,
    pub det_b_abs: Option<Stats>,
    pub kappa_paper: Option<Stats>,
    pub kappa_exact: Option<Stats>,
    pub worst: Option<WorstCell>,
}

pub fn summarize(map: &WorkspaceMap) -> Result<WorkspaceSummary> {
    if map.cells.is_empty() {
        return Err(Error::EmptyMap);
    }
    let n = map.cells.len() as f64;
    let reachable = || map.cells.iter().filter(|c| c.reachable);
    let worst = map
        .cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.margin().map(|mg| (i, c, mg)))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(index, c, margin)| WorstCell {
            index,
            orientation: c.orientation,
            margin,
            singularity: c.singularity,
        });
    Ok(WorkspaceSummary {
        cells: map.cells.len(),
        reachable_fraction: reachable().count() as f64 / n,
        singularity_free_fraction: reachable().filter(|c| !c.is_singular()).count() as f64 / n,
        det_a_abs: Stats::of(map.cells.iter().filter_map(|c| c.normalized_det_a.map(f64::abs))),
        det_b_abs: Stats::of(map.cells.iter().filter_map(|c| c.normalized_det_b.map(f64::abs))),
        kappa_paper: Stats::of(map.cells.iter().filter_map(|c| c.kappa_paper)),
        kappa_exact: Stats::of(map.cells.iter().filter_map(|c| c.kappa_exact)),
        worst,
    })
}

pub const CSV_HEADER: [&str; 12] = [
    "yaw_deg",
    "pitch_deg",
    "roll_deg",
    "reachable",
    "theta1",
    "theta2",
    "theta3",
    "det_A_norm",
    "det_B_norm",
    "kappa_paper",
    "kappa_exact",
    "singularity_kind",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per cell; fields of unreachable cells are empty and the kind column holds the error.
pub fn write_csv<W: Write>(map: &WorkspaceMap, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in &map.cells {
        let o = c.orientation;
        let j = c.joints;
        let kind = match (&c.singularity, &c.error) {
            (Some(k), _) => k.to_string(),
            (None, Some(e)) => e.clone(),
            (None, None) => String::new(),
        };
        w.write_record([
            o.yaw.to_degrees().to_string(),
            o.pitch.to_degrees().to_string(),
            o.roll.to_degrees().to_string(),
            c.reachable.to_string(),
            opt(j.map(|j| j.theta1)),
            opt(j.map(|j| j.theta2)),
            opt(j.map(|j| j.theta3)),
            opt(c.normalized_det_a),
            opt(c.normalized_det_b),
            opt(c.kappa_paper),
            opt(c.kappa_exact),
            kind,
        ])?;
    }
    w.flush()
}

/// Pairs of grid-adjacent reachable, non-singular cells whose branch flags differ.
pub fn branch_breaks(map: &WorkspaceMap) -> Vec<(usize, usize)> {
    let [ny, np, nr] = map.bounds.counts;
    let steps = [1, ny, ny * np];
    let mut breaks = Vec::new();
    for (i, c) in map.cells.iter().enumerate() {
        let idx = map.bounds.indices(i);
        for axis in 0..3 {
            let limit = [ny, np, nr][axis];
            if idx[axis] + 1 >= limit {
                continue;
            }
            let d = &map.cells[i + steps[axis]];
            let ok = |c: &WorkspaceCell| c.reachable && !c.is_singular();
            if ok(c) && ok(d) && c.branch != d.branch {
                breaks.push((i, i + steps[axis]));
            }
        }
    }
    breaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{mechanism_from_variant, VariantTag};

    fn pa() -> MechanismParams {
        mechanism_from_variant(VariantTag::ParallelActuators)
    }

    #[test]
    fn grid_layout() {
        let b = OrientationBox::envelope(&pa());
        assert_eq!(b.len(), 61 * 31 * 17);
        assert_eq!(b.indices(0), [0, 0, 0]);
        assert_eq!(b.indices(61), [0, 1, 0]);
        assert_eq!(b.indices(61 * 31), [0, 0, 1]);
        let first = b.offset(0);
        assert!((first.yaw + 30f64.to_radians()).abs() < 1e-15);
        let step = b.offset(1).yaw - first.yaw;
        assert!((step - 1f64.to_radians()).abs() < 1e-15);
        let roll_step = b.offset(61 * 31).roll - first.roll;
        assert!((roll_step - 0.5f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn single_cell_matches_direct_solve() {
        let m = pa();
        let o = m.home_orientation();
        let map = sweep_workspace(&m, &OrientationBox::single(o)).unwrap();
        assert_eq!(map.cells.len(), 1);
        let direct = solve_ik(&m, &o).unwrap();
        assert_eq!(map.cells[0].joints, Some(direct.working_pose().unwrap().joints));
        let s = summarize(&map).unwrap();
        let d = s.det_a_abs.unwrap();
        assert_eq!(d.min, d.max);
        assert_eq!(s.worst.unwrap().index, 0);
    }

    #[test]
    fn unreachable_cells_are_recorded() {
        let m = pa();
        let o = Orientation::new(std::f64::consts::FRAC_PI_4, -1.0, 0.6);
        let map = sweep_workspace(&m, &OrientationBox::single(o)).unwrap();
        assert!(!map.cells[0].reachable);
        assert_eq!(map.cells[0].error.as_deref(), Some("Unreachable"));
        let s = summarize(&map).unwrap();
        assert_eq!(s.reachable_fraction, 0.0);
        assert!(s.worst.is_none());
    }

    #[test]
    fn worst_cell_points_at_singular_cell() {
        let m = pa();
        let mut map = sweep_workspace(&m, &OrientationBox::envelope_with_counts(&m, [3, 3, 1])).unwrap();
        let i = 4;
        map.cells[i].normalized_det_a = Some(0.0);
        map.cells[i].singularity = Some(SingularityKind::ParallelCoplanar);
        let s = summarize(&map).unwrap();
        assert_eq!(s.worst.unwrap().index, i);
    }

    #[test]
    fn empty_map() {
        let m = pa();
        let map = WorkspaceMap {
            bounds: OrientationBox::single(m.home_orientation()),
            threshold: DEFAULT_THRESHOLD,
            cells: Vec::new(),
        };
        assert_eq!(summarize(&map), Err(Error::EmptyMap));
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let m = pa();
        let map = sweep_workspace(&m, &OrientationBox::envelope_with_counts(&m, [3, 2, 2])).unwrap();
        let mut buf = Vec::new();
        write_csv(&map, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], CSV_HEADER.join(","));
    }

    #[test]
    fn invalid_box() {
        let mut b = OrientationBox::envelope(&pa());
        b.counts[1] = 0;
        assert!(sweep_workspace(&pa(), &b).is_err());
    }
}
