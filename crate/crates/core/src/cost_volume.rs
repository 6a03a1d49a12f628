//! Plane-sweep matching-cost volume.
//!
//! For every inverse-depth hypothesis the reference pixel grid is pushed
//! through the plane-induced homography into each measurement frame and the
//! absolute intensity difference is averaged over the frames that observe it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{relative_pose, warp_matrix_between, DepthHypotheses, Intrinsics, Pose};
use crate::image::Image;

/// Cost used for a slice in which no cell was observed at all.
pub const EMPTY_SLICE_FILL: f64 = 1.0;

const DUMP_MAGIC: &[u8; 4] = b"MVCV";

/// A posed image. `pose` is `world_from_camera`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: String,
    pub image: Image,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

impl Frame {
    pub fn new(
        id: impl Into<String>,
        image: Image,
        pose: Pose,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        intrinsics.validate()?;
        if image.width() != intrinsics.width || image.height() != intrinsics.height {
            return Err(Error::InvalidFrame(format!(
                "image is {}x{} but intrinsics declare {}x{}",
                image.width(),
                image.height(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        if !matches!(image.channels(), 1 | 3) {
            return Err(Error::InvalidFrame(format!(
                "{} channels, expected 1 or 3",
                image.channels()
            )));
        }
        Ok(Self {
            id: id.into(),
            image,
            pose,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Same frame with its image replaced (e.g. after normalization).
    pub fn with_image(&self, image: Image) -> Result<Frame> {
        Frame::new(self.id.clone(), image, self.pose, self.intrinsics)
    }

    fn sort_key(&self) -> (&str, [u64; 12]) {
        let mut bits = [0u64; 12];
        for (b, v) in bits.iter_mut().zip(self.pose.rotation().iter()) {
            *b = v.to_bits();
        }
        for (b, v) in bits[9..].iter_mut().zip(self.pose.translation().iter()) {
            *b = v.to_bits();
        }
        (&self.id, bits)
    }

    fn same_observation(&self, other: &Frame) -> bool {
        self.pose == other.pose && self.intrinsics == other.intrinsics && self.image == other.image
    }
}

/// One depth plane of costs plus which pixels the measurement observed.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSlice {
    pub width: usize,
    pub height: usize,
    pub costs: Vec<f64>,
    pub valid: Vec<bool>,
}

/// `N_d x H x W` costs stored depth-major, with per-cell contributor counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    costs: Vec<f64>,
    valid_counts: Vec<u16>,
    hypotheses: DepthHypotheses,
}

impl CostVolume {
    /// Assembles a volume from raw parts, enforcing the fill rule for cells
    /// that have no contributors.
    pub fn from_parts(
        width: usize,
        height: usize,
        mut costs: Vec<f64>,
        valid_counts: Vec<u16>,
        hypotheses: DepthHypotheses,
    ) -> Result<Self> {
        let n = hypotheses.len() * width * height;
        if costs.len() != n || valid_counts.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "volume {}x{}x{} needs {n} cells, got {} costs and {} counts",
                hypotheses.len(),
                height,
                width,
                costs.len(),
                valid_counts.len()
            )));
        }
        let plane = width * height;
        for (c, k) in costs.chunks_mut(plane).zip(valid_counts.chunks(plane)) {
            fill_unobserved(c, k);
        }
        Ok(Self {
            width,
            height,
            costs,
            valid_counts,
            hypotheses,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth_count(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn hypotheses(&self) -> &DepthHypotheses {
        &self.hypotheses
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn valid_counts(&self) -> &[u16] {
        &self.valid_counts
    }

    #[inline]
    pub fn index(&self, d: usize, x: usize, y: usize) -> usize {
        (d * self.height + y) * self.width + x
    }

    #[inline]
    pub fn cost(&self, d: usize, x: usize, y: usize) -> f64 {
        self.costs[self.index(d, x, y)]
    }

    #[inline]
    pub fn count(&self, d: usize, x: usize, y: usize) -> u16 {
        self.valid_counts[self.index(d, x, y)]
    }

    pub fn slice(&self, d: usize) -> &[f64] {
        let p = self.plane_len();
        &self.costs[d * p..(d + 1) * p]
    }

    /// Costs along the depth axis at one pixel, `None` where unobserved.
    pub fn curve(&self, x: usize, y: usize) -> Vec<Option<f64>> {
        (0..self.depth_count())
            .map(|d| {
                let i = self.index(d, x, y);
                (self.valid_counts[i] > 0).then(|| self.costs[i])
            })
            .collect()
    }

    /// `a·cost + b` on every observed cell; fill values are recomputed.
    pub fn affine(&self, a: f64, b: f64) -> CostVolume {
        let costs = self.costs.iter().map(|&c| a * c + b).collect();
        CostVolume::from_parts(
            self.width,
            self.height,
            costs,
            self.valid_counts.clone(),
            self.hypotheses.clone(),
        )
        .expect("same shape")
    }

    /// Writes the `MVCV` dump: magic, `u32` N_d/H/W, then little-endian
    /// `f32` costs depth-major. The inverse depths go to the sidecar returned
    /// by [`sidecar_path`].
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(DUMP_MAGIC)?;
        for dim in [self.depth_count(), self.height, self.width] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &c in &self.costs {
            w.write_all(&(c as f32).to_le_bytes())?;
        }
        w.flush()?;
        let mut side = BufWriter::new(File::create(sidecar_path(path))?);
        writeln!(side, "# inverse depths (1/m), index 0 = d_max")?;
        writeln!(side, "# d_min {} d_max {}", self.hypotheses.d_min(), self.hypotheses.d_max())?;
        for v in self.hypotheses.inverse_depths() {
            writeln!(side, "{v}")?;
        }
        side.flush()?;
        Ok(())
    }
}

/// `volume.bin` -> `volume.bin.invdepth.txt`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".invdepth.txt");
    PathBuf::from(s)
}

/// Raw contents of an `MVCV` dump.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeDump {
    pub depth_count: usize,
    pub height: usize,
    pub width: usize,
    pub costs: Vec<f32>,
    pub inverse_depths: Vec<f64>,
}

pub fn read_dump(path: &Path) -> Result<VolumeDump> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != DUMP_MAGIC {
        return Err(Error::Format(format!("{} is not an MVCV dump", path.display())));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (nd, h, w) = (dim(0), dim(1), dim(2));
    let n = nd * h * w;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::Format(format!(
            "MVCV header declares {nd}x{h}x{w} but payload has {} bytes",
            bytes.len() - 16
        )));
    }
    let costs = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut inverse_depths = Vec::new();
    for line in BufReader::new(File::open(sidecar_path(path))?).lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        inverse_depths.push(
            t.parse()
                .map_err(|_| Error::Format(format!("bad inverse depth `{t}` in sidecar")))?,
        );
    }
    if inverse_depths.len() != nd {
        return Err(Error::Format(format!(
            "sidecar lists {} inverse depths for {nd} slices",
            inverse_depths.len()
        )));
    }
    Ok(VolumeDump {
        depth_count: nd,
        height: h,
        width: w,
        costs,
        inverse_depths,
    })
}

fn fill_unobserved(costs: &mut [f64], counts: &[u16]) {
    let fill = costs
        .iter()
        .zip(counts)
        .filter(|(_, &k)| k > 0)
        .map(|(&c, _)| c)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))))
        .unwrap_or(EMPTY_SLICE_FILL);
    for (c, &k) in costs.iter_mut().zip(counts) {
        if k == 0 {
            *c = fill;
        }
    }
}

/// Absolute-difference costs of one measurement frame at one depth.
pub fn warp_cost_slice(reference: &Frame, measurement: &Frame, depth: f64) -> CostSlice {
    let (w, h) = (reference.width(), reference.height());
    let mut costs = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    let rel = relative_pose(&measurement.pose, &reference.pose);
    accumulate_slice(reference, measurement, &rel, depth, &mut |i, c| {
        costs[i] = c;
        valid[i] = true;
    });
    CostSlice {
        width: w,
        height: h,
        costs,
        valid,
    }
}

#[inline]
fn accumulate_slice(
    reference: &Frame,
    measurement: &Frame,
    rel: &Pose,
    depth: f64,
    sink: &mut impl FnMut(usize, f64),
) {
    let warp = warp_matrix_between(&reference.intrinsics, &measurement.intrinsics, rel, depth);
    let (w, h) = (reference.width(), reference.height());
    let channels = reference.image.channels();
    let inv_c = 1.0 / channels as f64;
    let mut sample = [0.0f64; 3];
    for y in 0..h {
        for x in 0..w {
            let Some((um, vm)) = warp.apply(x as f64, y as f64) else {
                continue;
            };
            if !measurement
                .image
                .sample_bilinear_into(um, vm, &mut sample[..channels])
            {
                continue;
            }
            let r = reference.image.pixel(x, y);
            let mut ad = 0.0;
            for k in 0..channels {
                ad += (r[k] - sample[k]).abs();
            }
            sink(y * w + x, ad * inv_c);
        }
    }
}

struct Contributor<'a> {
    frame: &'a Frame,
    rel: Pose,
}

fn contributors<'a>(reference: &Frame, measurements: &'a [Frame]) -> Result<Vec<Contributor<'a>>> {
    if measurements.is_empty() {
        return Err(Error::EmptyMeasurementSet);
    }
    for m in measurements {
        if m.image.channels() != reference.image.channels() {
            return Err(Error::InvalidFrame(format!(
                "measurement {} has {} channels, reference has {}",
                m.id,
                m.image.channels(),
                reference.image.channels()
            )));
        }
    }
    let mut sorted: Vec<&Frame> = measurements.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut unique: Vec<&Frame> = Vec::with_capacity(sorted.len());
    for f in sorted {
        // An exact duplicate observation adds no evidence.
        if !unique.iter().any(|u| u.same_observation(f)) {
            unique.push(f);
        }
    }
    Ok(unique
        .into_iter()
        .map(|frame| Contributor {
            frame,
            rel: relative_pose(&frame.pose, &reference.pose),
        })
        .collect())
}

fn build_slice(
    reference: &Frame,
    contributors: &[Contributor<'_>],
    depth: f64,
) -> (Vec<f64>, Vec<u16>) {
    let n = reference.width() * reference.height();
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u16; n];
    for c in contributors {
        accumulate_slice(reference, c.frame, &c.rel, depth, &mut |i, cost| {
            sum[i] += cost;
            count[i] += 1;
        });
    }
    for (s, &k) in sum.iter_mut().zip(&count) {
        if k > 0 {
            *s /= k as f64;
        }
    }
    fill_unobserved(&mut sum, &count);
    (sum, count)
}

/// Mean absolute-difference cost volume over all measurement frames.
///
/// Runs on the current rayon pool when the `parallel` feature is on. Every
/// slice is reduced over contributors sorted by frame id, so the result does
/// not depend on the worker count or the order of `measurements`.
pub fn build_cost_volume(
    reference: &Frame,
    measurements: &[Frame],
    hypotheses: &DepthHypotheses,
) -> Result<CostVolume> {
    let contributors = contributors(reference, measurements)?;
    if contributors.len() > u16::MAX as usize {
        return Err(Error::InvalidFrame(format!(
            "{} measurement frames exceed the contributor counter",
            contributors.len()
        )));
    }
    let depths: Vec<f64> = (0..hypotheses.len()).map(|i| hypotheses.depth(i)).collect();

    #[cfg(feature = "parallel")]
    let slices: Vec<(Vec<f64>, Vec<u16>)> = {
        use rayon::prelude::*;
        depths
            .par_iter()
            .map(|&d| build_slice(reference, &contributors, d))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let slices: Vec<(Vec<f64>, Vec<u16>)> = depths
        .iter()
        .map(|&d| build_slice(reference, &contributors, d))
        .collect();

    let n = reference.width() * reference.height() * depths.len();
    let mut costs = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for (c, k) in slices {
        costs.extend_from_slice(&c);
        counts.extend_from_slice(&k);
    }
    Ok(CostVolume {
        width: reference.width(),
        height: reference.height(),
        costs,
        valid_counts: counts,
        hypotheses: hypotheses.clone(),
    })
}

/// [`build_cost_volume`] on a dedicated pool of `threads` workers.
#[cfg(feature = "parallel")]
pub fn build_cost_volume_with_threads(
    reference: &Frame,
    measurements: &[Frame],
    hypotheses: &DepthHypotheses,
    threads: usize,
) -> Result<CostVolume> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| build_cost_volume(reference, measurements, hypotheses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_inverse_depths;
    use nalgebra::Vector3;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| {
            let (x, y) = (x as f64, y as f64);
            (0.3 * x + c as f64).sin() + (0.21 * y - 0.5 * c as f64).cos() * 0.5
        })
    }

    fn frame(id: &str, img: Image, pose: Pose) -> Frame {
        let intr = Intrinsics::new(40.0, 40.0, 15.5, 11.5, img.width(), img.height()).unwrap();
        Frame::new(id, img, pose, intr).unwrap()
    }

    #[test]
    fn frame_rejects_bad_shapes() {
        let intr = Intrinsics::new(40.0, 40.0, 15.5, 11.5, 32, 24).unwrap();
        assert!(Frame::new("a", Image::filled(31, 24, 3, 0.0), Pose::identity(), intr).is_err());
        assert!(Frame::new("a", Image::filled(32, 24, 2, 0.0), Pose::identity(), intr).is_err());
    }

    #[test]
    fn identity_slice_is_zero_and_fully_valid() {
        let f = frame("r", textured(32, 24), Pose::identity());
        for d in [0.5, 3.0, 50.0] {
            let s = warp_cost_slice(&f, &f, d);
            assert!(s.valid.iter().all(|&v| v));
            assert!(s.costs.iter().all(|&c| c < 1e-12));
        }
    }

    #[test]
    fn empty_measurement_set_is_an_error() {
        let f = frame("r", textured(32, 24), Pose::identity());
        let hyp = sample_inverse_depths(0.5, 50.0, 8).unwrap();
        assert!(matches!(
            build_cost_volume(&f, &[], &hyp),
            Err(Error::EmptyMeasurementSet)
        ));
    }

    #[test]
    fn single_measurement_matches_slices() {
        let r = frame("r", textured(32, 24), Pose::identity());
        let m = frame(
            "m",
            textured(32, 24).map(|v| v * 0.9 + 0.05),
            Pose::from_translation(Vector3::new(0.1, 0.02, 0.0)),
        );
        let hyp = sample_inverse_depths(0.5, 50.0, 8).unwrap();
        let vol = build_cost_volume(&r, std::slice::from_ref(&m), &hyp).unwrap();
        for d in 0..hyp.len() {
            let s = warp_cost_slice(&r, &m, hyp.depth(d));
            for i in 0..s.costs.len() {
                let (x, y) = (i % 32, i / 32);
                assert_eq!(vol.count(d, x, y) > 0, s.valid[i]);
                if s.valid[i] {
                    assert_eq!(vol.cost(d, x, y), s.costs[i]);
                }
            }
        }
    }

    #[test]
    fn duplicates_and_order_do_not_matter() {
        let r = frame("r", textured(32, 24), Pose::identity());
        let a = frame("a", textured(32, 24), Pose::from_translation(Vector3::new(0.1, 0.0, 0.0)));
        let b = frame("b", textured(32, 24), Pose::from_translation(Vector3::new(0.0, -0.07, 0.01)));
        let hyp = sample_inverse_depths(0.5, 50.0, 8).unwrap();
        let ab = build_cost_volume(&r, &[a.clone(), b.clone()], &hyp).unwrap();
        let ba = build_cost_volume(&r, &[b.clone(), a.clone()], &hyp).unwrap();
        assert_eq!(ab, ba);
        let aab = build_cost_volume(&r, &[a.clone(), b.clone(), a.clone()], &hyp).unwrap();
        assert_eq!(ab, aab);
        let single = build_cost_volume(&r, std::slice::from_ref(&a), &hyp).unwrap();
        let doubled = build_cost_volume(&r, &[a.clone(), a], &hyp).unwrap();
        assert_eq!(single, doubled);
        assert!(ab.valid_counts().iter().all(|&k| k <= 2));
    }

    #[test]
    fn unobserved_cells_take_the_slice_maximum() {
        let r = frame("r", textured(32, 24), Pose::identity());
        // Large sideways shift: part of every near slice falls outside.
        let m = frame("m", textured(32, 24), Pose::from_translation(Vector3::new(0.3, 0.0, 0.0)));
        let hyp = sample_inverse_depths(0.5, 50.0, 8).unwrap();
        let vol = build_cost_volume(&r, &[m], &hyp).unwrap();
        let mut saw_gap = false;
        for d in 0..vol.depth_count() {
            let p = vol.plane_len();
            let costs = &vol.costs()[d * p..(d + 1) * p];
            let counts = &vol.valid_counts()[d * p..(d + 1) * p];
            let max_valid = costs
                .iter()
                .zip(counts)
                .filter(|(_, &k)| k > 0)
                .map(|(&c, _)| c)
                .fold(f64::NEG_INFINITY, f64::max);
            for (&c, &k) in costs.iter().zip(counts) {
                if k == 0 {
                    saw_gap = true;
                    assert_eq!(c, max_valid);
                } else {
                    assert!(c >= 0.0);
                }
            }
        }
        assert!(saw_gap);
    }

    #[test]
    fn fully_unobserved_slice_uses_unit_fill() {
        let hyp = sample_inverse_depths(1.0, 2.0, 2).unwrap();
        let vol = CostVolume::from_parts(2, 1, vec![0.0; 4], vec![0, 0, 1, 0], hyp).unwrap();
        assert_eq!(vol.costs(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn worker_count_does_not_change_bits() {
        let r = frame("r", textured(32, 24), Pose::identity());
        let a = frame("a", textured(32, 24), Pose::from_translation(Vector3::new(0.1, 0.0, 0.0)));
        let b = frame("b", textured(32, 24), Pose::from_translation(Vector3::new(0.0, -0.07, 0.01)));
        let hyp = sample_inverse_depths(0.5, 50.0, 16).unwrap();
        let ms = [a, b];
        let one = build_cost_volume_with_threads(&r, &ms, &hyp, 1).unwrap();
        let three = build_cost_volume_with_threads(&r, &ms, &hyp, 3).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn dump_roundtrip() {
        let r = frame("r", textured(32, 24), Pose::identity());
        let m = frame("m", textured(32, 24), Pose::from_translation(Vector3::new(0.05, 0.0, 0.0)));
        let hyp = sample_inverse_depths(0.5, 50.0, 4).unwrap();
        let vol = build_cost_volume(&r, &[m], &hyp).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.mvcv");
        vol.write_dump(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"MVCV");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 24);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 32);
        let dump = read_dump(&path).unwrap();
        assert_eq!(dump.inverse_depths, hyp.inverse_depths());
        for (a, b) in dump.costs.iter().zip(vol.costs()) {
            assert_eq!(*a, *b as f32);
        }
    }
}
