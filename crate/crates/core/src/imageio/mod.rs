//! Readers and writers for depth, probability, normal and edge rasters, and
//! for evaluation reports.
//!
//! Depth is stored either as a one-channel float map in meters (`.pfm`) or
//! as a 16-bit binary graymap in millimeters (`.pgm`). In both, a zero sample
//! marks an invalid pixel. Edge and validity masks are packed bitmaps (`.pbm`).

pub mod netpbm;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edges::EdgeMap;
use crate::error::{Error, Result};
use crate::grid::{DepthGrid, Grid, NormalGrid, ProbGrid};

pub use netpbm::FloatImage;
pub use report::{read_report, table_header, write_report, write_table_csv, TableRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    /// 32-bit floats in meters.
    Pfm,
    /// 16-bit unsigned millimeters.
    Pgm,
}

impl DepthFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("pfm") => Ok(DepthFormat::Pfm),
            Some("pgm") => Ok(DepthFormat::Pgm),
            _ => Err(Error::Parameter(format!(
                "{}: depth files must end in .pfm or .pgm",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Pfm => "pfm",
            DepthFormat::Pgm => "pgm",
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::from(e).in_file(path))
}

fn write_bytes(path: &Path, bytes: Result<Vec<u8>>) -> Result<()> {
    bytes
        .and_then(|b| fs::write(path, b).map_err(Error::from))
        .map_err(|e| e.in_file(path))
}

pub fn decode_depth(bytes: &[u8], format: DepthFormat) -> Result<DepthGrid> {
    match format {
        DepthFormat::Pfm => {
            let img = netpbm::parse_pfm(bytes)?;
            if img.channels != 1 {
                return Err(Error::parse(0, "depth needs a one-channel \"Pf\" map"));
            }
            DepthGrid::from_samples(img.width, img.height, img.data.iter().map(|&v| v as f64).collect())
        }
        DepthFormat::Pgm => {
            let (w, h, samples) = netpbm::parse_pgm16(bytes)?;
            DepthGrid::from_samples(w, h, samples.iter().map(|&s| s as f64 / 1000.0).collect())
        }
    }
}

/// Encodes depth; invalid pixels are written as 0. PFM stores values
/// rounded to single precision; PGM rounds to whole millimeters and rejects
/// valid depths outside `[0.001, 65.535]` m.
pub fn encode_depth(d: &DepthGrid, format: DepthFormat) -> Result<Vec<u8>> {
    let samples = d.values().iter().zip(d.mask());
    match format {
        DepthFormat::Pfm => netpbm::encode_pfm(&FloatImage {
            width: d.width(),
            height: d.height(),
            channels: 1,
            data: samples.map(|(&v, &m)| if m { v as f32 } else { 0.0 }).collect(),
        }),
        DepthFormat::Pgm => {
            let mut out = Vec::with_capacity(d.len());
            for (&v, &m) in samples {
                if !m {
                    out.push(0);
                    continue;
                }
                let mm = (v * 1000.0).round();
                if !(1.0..=65535.0).contains(&mm) {
                    return Err(Error::Parameter(format!(
                        "depth {v} m does not fit a 16-bit millimeter sample"
                    )));
                }
                out.push(mm as u16);
            }
            netpbm::encode_pgm16(d.width(), d.height(), &out)
        }
    }
}

pub fn read_depth(path: &Path, format: DepthFormat) -> Result<DepthGrid> {
    decode_depth(&read_bytes(path)?, format).map_err(|e| e.in_file(path))
}

pub fn write_depth(path: &Path, d: &DepthGrid, format: DepthFormat) -> Result<()> {
    write_bytes(path, encode_depth(d, format))
}

/// Depth with the format taken from the file extension.
pub fn read_depth_auto(path: &Path) -> Result<DepthGrid> {
    read_depth(path, DepthFormat::from_path(path)?)
}

pub fn decode_mask(bytes: &[u8]) -> Result<EdgeMap> {
    let (w, h, bits) = netpbm::parse_pbm(bytes)?;
    EdgeMap::new(w, h, bits)
}

pub fn encode_mask(e: &EdgeMap) -> Result<Vec<u8>> {
    netpbm::encode_pbm(e.width(), e.height(), e.bits())
}

/// Edge map or validity mask; a set bit means edge (or valid).
pub fn read_mask(path: &Path) -> Result<EdgeMap> {
    decode_mask(&read_bytes(path)?).map_err(|e| e.in_file(path))
}

pub fn write_mask(path: &Path, e: &EdgeMap) -> Result<()> {
    write_bytes(path, encode_mask(e))
}

/// Probabilities as a one-channel float map; NaN marks invalid pixels.
pub fn read_probabilities(path: &Path) -> Result<ProbGrid> {
    let parse = |bytes: &[u8]| -> Result<ProbGrid> {
        let img = netpbm::parse_pfm(bytes)?;
        if img.channels != 1 {
            return Err(Error::parse(0, "probabilities need a one-channel \"Pf\" map"));
        }
        let values: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();
        let mask = values.iter().map(|v| !v.is_nan()).collect();
        ProbGrid::new(Grid::new(img.width, img.height, values, mask)?)
    };
    parse(&read_bytes(path)?).map_err(|e| e.in_file(path))
}

pub fn write_probabilities(path: &Path, p: &ProbGrid) -> Result<()> {
    let data = p
        .values()
        .iter()
        .zip(p.mask())
        .map(|(&v, &m)| if m { v as f32 } else { f32::NAN })
        .collect();
    write_bytes(
        path,
        netpbm::encode_pfm(&FloatImage {
            width: p.width(),
            height: p.height(),
            channels: 1,
            data,
        }),
    )
}

/// Unit normals as a three-channel float map; a zero vector marks an
/// invalid pixel.
pub fn read_normals(path: &Path) -> Result<NormalGrid> {
    let parse = |bytes: &[u8]| -> Result<NormalGrid> {
        let img = netpbm::parse_pfm(bytes)?;
        if img.channels != 3 {
            return Err(Error::parse(0, "normals need a three-channel \"PF\" map"));
        }
        let values: Vec<[f64; 3]> = img
            .data
            .chunks_exact(3)
            .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
            .collect();
        let mask = values.iter().map(|v| v.iter().any(|&c| c != 0.0)).collect();
        NormalGrid::new(Grid::new(img.width, img.height, values, mask)?)
    };
    parse(&read_bytes(path)?).map_err(|e| e.in_file(path))
}

pub fn write_normals(path: &Path, n: &NormalGrid) -> Result<()> {
    let mut data = Vec::with_capacity(n.len() * 3);
    for (v, &m) in n.values().iter().zip(n.mask()) {
        let v = if m { *v } else { [0.0; 3] };
        data.extend(v.iter().map(|&c| c as f32));
    }
    write_bytes(
        path,
        netpbm::encode_pfm(&FloatImage {
            width: n.width(),
            height: n.height(),
            channels: 3,
            data,
        }),
    )
}

/// One evaluation sample: a predicted and a ground-truth depth file plus
/// optional annotations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contours: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<PathBuf>,
}

/// Parsed contents of a [`DatasetEntry`].
#[derive(Clone, Debug)]
pub struct LoadedEntry {
    pub pred: DepthGrid,
    pub gt: DepthGrid,
    pub contours: Option<EdgeMap>,
    pub normals: Option<NormalGrid>,
}

impl DatasetEntry {
    pub fn load(&self) -> Result<LoadedEntry> {
        let pred = read_depth_auto(&self.pred)?;
        let gt = read_depth_auto(&self.gt)?;
        pred.check_shape(&gt).map_err(|e| e.in_file(&self.pred))?;
        let contours = self.contours.as_deref().map(read_mask).transpose()?;
        if let (Some(c), Some(path)) = (&contours, &self.contours) {
            if (c.width(), c.height()) != (gt.width(), gt.height()) {
                return Err(Error::Dimension(format!(
                    "contours {}x{} vs depth {}x{}",
                    c.width(),
                    c.height(),
                    gt.width(),
                    gt.height()
                ))
                .in_file(path));
            }
        }
        let normals = self.normals.as_deref().map(read_normals).transpose()?;
        if let (Some(n), Some(path)) = (&normals, &self.normals) {
            n.check_shape(&gt).map_err(|e| e.in_file(path))?;
        }
        Ok(LoadedEntry {
            pred,
            gt,
            contours,
            normals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_pfm_round_trip() {
        let d = DepthGrid::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_depth(&d, DepthFormat::Pfm).unwrap();
        let back = decode_depth(&bytes, DepthFormat::Pfm).unwrap();
        assert_eq!(back, d);
        assert_eq!(encode_depth(&back, DepthFormat::Pfm).unwrap(), bytes);
    }

    #[test]
    fn pgm_millimeters() {
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&1500u16.to_be_bytes());
        bytes.extend_from_slice(&0u16.to_be_bytes());
        let d = decode_depth(&bytes, DepthFormat::Pgm).unwrap();
        assert_eq!(d.get(0, 0), 1.5);
        assert!(d.is_valid(0, 0));
        assert!(!d.is_valid(1, 0));
        assert_eq!(encode_depth(&d, DepthFormat::Pgm).unwrap(), bytes);
    }

    #[test]
    fn pgm_is_exact_for_every_sample() {
        let samples: Vec<u16> = (1..=65535).collect();
        let bytes = netpbm::encode_pgm16(65535, 1, &samples).unwrap();
        let d = decode_depth(&bytes, DepthFormat::Pgm).unwrap();
        assert_eq!(encode_depth(&d, DepthFormat::Pgm).unwrap(), bytes);
    }

    #[test]
    fn pgm_rejects_out_of_range_depth() {
        let d = DepthGrid::filled(1, 1, 70.0).unwrap();
        assert!(encode_depth(&d, DepthFormat::Pgm).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(DepthFormat::from_path(Path::new("a/b.PFM")).unwrap(), DepthFormat::Pfm);
        assert_eq!(DepthFormat::from_path(Path::new("x.pgm")).unwrap(), DepthFormat::Pgm);
        assert!(DepthFormat::from_path(Path::new("x.png")).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = EdgeMap::from_fn(9, 3, |x, y| (x + y) % 4 == 0);
        let p = dir.path().join("e.pbm");
        write_mask(&p, &e).unwrap();
        assert_eq!(read_mask(&p).unwrap(), e);

        let probs = ProbGrid::new(
            Grid::from_fn(3, 2, |x, y| (x + y) as f64 / 4.0)
                .with_mask(vec![true, false, true, true, true, true])
                .unwrap(),
        )
        .unwrap();
        let p = dir.path().join("c.pfm");
        write_probabilities(&p, &probs).unwrap();
        let back = read_probabilities(&p).unwrap();
        assert_eq!(back.mask(), probs.mask());
        assert_eq!(back.get(2, 1), probs.get(2, 1));

        let n = NormalGrid::normalized(Grid::from_fn(2, 2, |x, _| {
            if x == 0 {
                [0.0, 0.0, -1.0]
            } else {
                [0.0, 0.0, 0.0]
            }
        }));
        let p = dir.path().join("n.pfm");
        write_normals(&p, &n).unwrap();
        assert_eq!(read_normals(&p).unwrap(), n);
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        fs::write(&p, b"Pf\n2 2\n-1\n\0").unwrap();
        let e = read_depth_auto(&p).unwrap_err();
        assert!(e.to_string().contains("bad.pfm"), "{e}");
        assert!(matches!(e, Error::File { ref source, .. } if matches!(**source, Error::Parse { .. })));
    }
}
