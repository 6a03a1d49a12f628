//! TUM RGB-D layout: `rgb.txt`, `depth.txt`, `groundtruth.txt` and a
//! key-value `intrinsics.txt` next to the image folders.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};

use super::config::read_intrinsics;

/// Default maximum timestamp difference (seconds) for association.
pub const DEFAULT_ASSOCIATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub timestamp: f64,
    pub rgb: PathBuf,
    pub depth_timestamp: f64,
    pub depth: PathBuf,
    pub pose_timestamp: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceIndex {
    pub entries: Vec<SequenceEntry>,
    pub intrinsics: Option<Intrinsics>,
    /// Input rows that found no partner within the tolerance.
    pub dropped_rgb: usize,
    pub dropped_depth: usize,
}

impl SequenceIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn data_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(n, l)| {
            let l = l.trim();
            (!l.is_empty() && !l.starts_with('#'))
                .then(|| (n + 1, l.split_whitespace().map(str::to_string).collect()))
        })
        .collect())
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: format!("expected a number, got `{s}`"),
    })
}

/// `timestamp filename` rows; relative filenames are resolved against the
/// list's directory.
pub fn read_image_list(path: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (line, fields) in data_lines(path)? {
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: "expected `timestamp filename`".into(),
            });
        }
        out.push((parse_f64(path, line, &fields[0])?, base.join(&fields[1])));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// `timestamp tx ty tz qx qy qz qw` rows (world_from_camera).
pub fn read_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>> {
    let mut out = Vec::new();
    for (line, fields) in data_lines(path)? {
        if fields.len() != 8 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let v: Vec<f64> = fields
            .iter()
            .map(|f| parse_f64(path, line, f))
            .collect::<Result<_>>()?;
        let pose = Pose::from_quaternion(Vector3::new(v[1], v[2], v[3]), [v[4], v[5], v[6], v[7]])
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            })?;
        out.push((v[0], pose));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn format_trajectory_row(timestamp: f64, pose: &Pose) -> String {
    let t = pose.translation();
    let q = pose.quaternion();
    format!(
        "{timestamp:.6} {} {} {} {} {} {} {}",
        t.x, t.y, t.z, q[0], q[1], q[2], q[3]
    )
}

/// Greedy one-to-one matching of two sorted timestamp lists: candidate pairs
/// within `tolerance` are taken in order of increasing time difference.
fn greedy_match(a: &[f64], b: &[f64], tolerance: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    let mut lo = 0;
    for (i, &ta) in a.iter().enumerate() {
        while lo < b.len() && b[lo] < ta - tolerance {
            lo += 1;
        }
        let mut j = lo;
        while j < b.len() && b[j] <= ta + tolerance {
            candidates.push(((ta - b[j]).abs(), i, j));
            j += 1;
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

fn nearest(times: &[f64], t: f64) -> Option<usize> {
    if times.is_empty() {
        return None;
    }
    let k = times.partition_point(|&x| x < t);
    let mut best = None;
    for c in [k.saturating_sub(1), k.min(times.len() - 1)] {
        let d = (times[c] - t).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c)
}

/// Associates color, depth and pose streams by nearest timestamps.
///
/// Color and depth are matched one-to-one; each matched pair then takes the
/// pose closest to the color timestamp. Inputs must be sorted.
pub fn associate(
    rgb: &[(f64, PathBuf)],
    depth: &[(f64, PathBuf)],
    poses: &[(f64, Pose)],
    tolerance: f64,
) -> Result<SequenceIndex> {
    let rgb_t: Vec<f64> = rgb.iter().map(|r| r.0).collect();
    let depth_t: Vec<f64> = depth.iter().map(|r| r.0).collect();
    let pose_t: Vec<f64> = poses.iter().map(|r| r.0).collect();
    let mut entries: Vec<SequenceEntry> = Vec::new();
    for (i, j) in greedy_match(&rgb_t, &depth_t, tolerance) {
        let Some(k) = nearest(&pose_t, rgb_t[i]) else { continue };
        if (pose_t[k] - rgb_t[i]).abs() > tolerance {
            continue;
        }
        if entries.last().is_some_and(|e| e.timestamp >= rgb_t[i]) {
            continue;
        }
        entries.push(SequenceEntry {
            timestamp: rgb_t[i],
            rgb: rgb[i].1.clone(),
            depth_timestamp: depth_t[j],
            depth: depth[j].1.clone(),
            pose_timestamp: pose_t[k],
            pose: poses[k].1,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(SequenceIndex {
        dropped_rgb: rgb.len() - entries.len(),
        dropped_depth: depth.len() - entries.len(),
        entries,
        intrinsics: None,
    })
}

/// Loads a TUM-layout directory.
pub fn load_sequence(dir: &Path, tolerance: f64) -> Result<SequenceIndex> {
    let rgb = read_image_list(&dir.join("rgb.txt"))?;
    let depth = read_image_list(&dir.join("depth.txt"))?;
    let poses = read_trajectory(&dir.join("groundtruth.txt"))?;
    let mut index = associate(&rgb, &depth, &poses, tolerance)?;
    let intr = dir.join("intrinsics.txt");
    if intr.exists() {
        index.intrinsics = Some(read_intrinsics(&intr)?);
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(times: &[f64]) -> Vec<(f64, PathBuf)> {
        times.iter().map(|&t| (t, PathBuf::from(format!("{t:.4}.png")))).collect()
    }

    fn poses(times: &[f64]) -> Vec<(f64, Pose)> {
        times
            .iter()
            .map(|&t| (t, Pose::from_translation(Vector3::new(t, 0.0, 0.0))))
            .collect()
    }

    fn grid(hz: f64, seconds: f64, offset: f64) -> Vec<f64> {
        let n = (seconds * hz).round() as usize;
        (0..n).map(|i| i as f64 / hz + offset).collect()
    }

    #[test]
    fn identical_streams_associate_fully() {
        let t = grid(30.0, 2.0, 100.0);
        let idx = associate(&stream(&t), &stream(&t), &poses(&t), 0.02).unwrap();
        assert_eq!(idx.len(), t.len());
        assert_eq!((idx.dropped_rgb, idx.dropped_depth), (0, 0));
        for (e, &ts) in idx.entries.iter().zip(&t) {
            assert_eq!(e.timestamp, ts);
            assert_eq!(e.depth_timestamp, ts);
        }
    }

    #[test]
    fn small_offsets_within_tolerance() {
        let t = grid(30.0, 2.0, 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.01).collect();
        let idx = associate(&stream(&t), &stream(&shifted), &poses(&t), 0.02).unwrap();
        assert_eq!(idx.len(), t.len());
    }

    #[test]
    fn mixed_rates_keep_the_slower_stream() {
        let fast = grid(30.0, 3.0, 0.0);
        let slow = grid(10.0, 3.0, 0.0);
        let idx = associate(&stream(&fast), &stream(&slow), &poses(&fast), 0.02).unwrap();
        assert_eq!(idx.len(), slow.len());
        assert_eq!(idx.dropped_rgb, fast.len() - slow.len());
        assert!(idx.entries.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn nothing_matches() {
        let a = grid(10.0, 1.0, 0.0);
        let b = grid(10.0, 1.0, 0.05);
        assert!(matches!(
            associate(&stream(&a), &stream(&b), &poses(&a), 0.02),
            Err(Error::EmptyResult)
        ));
    }

    #[test]
    fn trajectory_rows_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groundtruth.txt");
        let pose = Pose::from_quaternion(Vector3::new(1.0, -2.0, 0.25), [0.1, 0.2, 0.3, 0.9]).unwrap();
        std::fs::write(
            &path,
            format!("# timestamp tx ty tz qx qy qz qw\n{}\n", format_trajectory_row(1.5, &pose)),
        )
        .unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, 1.5);
        assert!((back[0].1.rotation() - pose.rotation()).amax() < 1e-12);
        assert!((back[0].1.translation() - pose.translation()).amax() < 1e-12);
    }

    #[test]
    fn malformed_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groundtruth.txt");
        std::fs::write(&path, "1.0 0 0 0 0 0 0\n").unwrap();
        assert!(matches!(read_trajectory(&path), Err(Error::Parse { line: 1, .. })));
    }
}
