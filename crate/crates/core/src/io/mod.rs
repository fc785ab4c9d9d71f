//! Point-cloud ingestion, synthetic scene generation and sparse annotation.

mod kitti;
mod ply;
mod scene;
mod sparse;
mod split;
mod window;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use kitti::{decode_kitti_bin, decode_labels, encode_kitti_bin, encode_labels, read_labels, write_labels};
pub use ply::{decode_ply, encode_ply, PlyEncoding};
pub use scene::{generate_scene, Primitive, SceneSpec, Shape};
pub use sparse::{sample_sparse_labels, sample_sparse_mask, stratum_size, SparseLabelMask};
pub use split::DatasetSplit;
pub use window::Window;

/// Label value marking a point without annotation.
pub const UNLABELED: u32 = u32::MAX;

/// Attributes carried per point: x, y, z (meters) and intensity.
pub const NUM_ATTRS: usize = 4;

/// On-disk formats accepted by [`read_cloud`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    /// Flat little-endian `f32 × 4` records.
    KittiBin,
    Ply,
}

impl CloudFormat {
    /// Guesses the format from a file extension (`.bin` or `.ply`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "bin" => Some(CloudFormat::KittiBin),
            "ply" => Some(CloudFormat::Ply),
            _ => None,
        }
    }
}

/// Dense point cloud with optional per-point class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<[T; NUM_ATTRS]>,
    labels: Option<Vec<u32>>,
    num_classes: Option<usize>,
}

impl<T: Scalar> PointCloud<T> {
    /// Builds an unlabeled cloud. Requires at least one point and finite values.
    pub fn new(points: Vec<[T; NUM_ATTRS]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewPoints("zero points".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("point {i} has a non-finite attribute")));
        }
        Ok(Self {
            points,
            labels: None,
            num_classes: None,
        })
    }

    /// Builds a labeled cloud; see [`PointCloud::attach_labels`].
    pub fn with_labels(points: Vec<[T; NUM_ATTRS]>, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.attach_labels(labels, num_classes)?;
        Ok(cloud)
    }

    /// Attaches labels, validating length and class range. [`UNLABELED`] is allowed.
    pub fn attach_labels(&mut self, labels: Vec<u32>, num_classes: usize) -> Result<()> {
        if labels.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                got: labels.len(),
                expected: self.points.len(),
            });
        }
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l != UNLABELED && l as usize >= num_classes)
        {
            return Err(Error::Argument(format!(
                "label {l} at point {i} is out of range for {num_classes} classes"
            )));
        }
        self.labels = Some(labels);
        self.num_classes = Some(num_classes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_attrs(&self) -> usize {
        NUM_ATTRS
    }

    pub fn points(&self) -> &[[T; NUM_ATTRS]] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn xyz(&self, i: usize) -> [T; 3] {
        let p = &self.points[i];
        [p[0], p[1], p[2]]
    }

    /// All coordinates as `[x, y, z]` triples.
    pub fn positions(&self) -> Vec<[T; 3]> {
        self.points.iter().map(|p| [p[0], p[1], p[2]]).collect()
    }

    /// Sub-cloud with the given point indices, labels carried along.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let mut out = Self::new(points)?;
        if let (Some(labels), Some(c)) = (&self.labels, self.num_classes) {
            out.labels = Some(indices.iter().map(|&i| labels[i]).collect());
            out.num_classes = Some(c);
        }
        Ok(out)
    }

    /// Converts to another precision. Widening conversions are exact.
    pub fn cast<U: Scalar>(&self) -> PointCloud<U> {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| p.map(|v| U::from_f64(v.as_f64()).expect("finite")))
                .collect(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }

    /// Histogram of labels, excluding [`UNLABELED`].
    pub fn class_histogram(&self) -> Vec<usize> {
        let (Some(labels), Some(c)) = (&self.labels, self.num_classes) else {
            return Vec::new();
        };
        let mut hist = vec![0usize; c];
        for &l in labels.iter().filter(|&&l| l != UNLABELED) {
            hist[l as usize] += 1;
        }
        hist
    }
}

/// Reads a cloud from disk. Labels are never attached here.
pub fn read_cloud<T: Scalar>(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::KittiBin => decode_kitti_bin(&bytes),
        CloudFormat::Ply => decode_ply(&bytes),
    }
}

/// Writes a cloud to disk. PLY output is binary little-endian.
pub fn write_cloud<T: Scalar>(path: impl AsRef<Path>, cloud: &PointCloud<T>, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::KittiBin => encode_kitti_bin(cloud),
        CloudFormat::Ply => encode_ply(cloud, PlyEncoding::BinaryLittleEndian),
    };
    write_atomic(path, &bytes)
}

/// Writes through a sibling temp file and renames, so readers never see a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::<f32>::new(vec![]), Err(Error::TooFewPoints(_))));
        assert!(matches!(
            PointCloud::new(vec![[0.0f32, f32::NAN, 0.0, 0.0]]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn attach_checks_length_and_range() {
        let mut c = PointCloud::new(vec![[0.0f32; 4]; 4]).unwrap();
        let err = c.attach_labels(vec![0, 1, 2], 3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('4'), "{msg}");
        assert!(c.attach_labels(vec![0, 1, 3, 0], 3).is_err());
        c.attach_labels(vec![0, 1, UNLABELED, 2], 3).unwrap();
        assert_eq!(c.class_histogram(), vec![1, 1, 1]);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(CloudFormat::from_path(Path::new("a/b.BIN")), Some(CloudFormat::KittiBin));
        assert_eq!(CloudFormat::from_path(Path::new("x.ply")), Some(CloudFormat::Ply));
        assert_eq!(CloudFormat::from_path(Path::new("x.las")), None);
    }
}
