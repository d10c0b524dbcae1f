//! Synthetic data generators and CSV point ingestion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where experiment data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    UniformBox {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    GaussianMixture {
        centers: Vec<Vec<f64>>,
        std: f64,
    },
    /// Clusters spaced evenly on a circle, with Gaussian jitter.
    ClusteredRing {
        center: Vec<f64>,
        radius: f64,
        clusters: usize,
        std: f64,
    },
    /// Qualifying-record flags for the threshold query.
    Bernoulli {
        p: f64,
    },
    /// Pre-projected points: header `x1,...,xd`, one point per line.
    Csv {
        path: String,
    },
}

impl DataSource {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            DataSource::UniformBox { low, high } => {
                if low.len() != d || high.len() != d {
                    return Err(Error::config("uniform_box bounds must have d entries"));
                }
                if low.iter().zip(high).any(|(l, h)| l >= h) {
                    return Err(Error::config("uniform_box needs low < high per axis"));
                }
            }
            DataSource::GaussianMixture { centers, std } => {
                if centers.is_empty() || centers.iter().any(|c| c.len() != d) {
                    return Err(Error::config("mixture centers must be nonempty, d-dim"));
                }
                if !(*std >= 0.0) {
                    return Err(Error::config("mixture std must be nonnegative"));
                }
            }
            DataSource::ClusteredRing {
                center,
                radius,
                clusters,
                std,
            } => {
                if d != 2 || center.len() != 2 {
                    return Err(Error::config("clustered_ring is planar (d = 2)"));
                }
                if !(*radius > 0.0) || *clusters == 0 || !(*std >= 0.0) {
                    return Err(Error::config(
                        "clustered_ring needs radius > 0, clusters >= 1",
                    ));
                }
            }
            DataSource::Bernoulli { p } => {
                if !(*p >= 0.0 && *p <= 1.0) {
                    return Err(Error::config("bernoulli p must be in [0, 1]"));
                }
            }
            DataSource::Csv { .. } => {}
        }
        Ok(())
    }

    /// Bounding box query points are drawn from. CSV sources derive it from
    /// the realized points.
    pub fn domain_box(&self, d: usize, points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        match self {
            DataSource::UniformBox { low, high } => (low.clone(), high.clone()),
            DataSource::GaussianMixture { centers, std } => {
                let mut low = vec![f64::INFINITY; d];
                let mut high = vec![f64::NEG_INFINITY; d];
                for c in centers {
                    for (axis, &x) in c.iter().enumerate() {
                        low[axis] = low[axis].min(x - 3.0 * std);
                        high[axis] = high[axis].max(x + 3.0 * std);
                    }
                }
                (low, high)
            }
            DataSource::ClusteredRing {
                center,
                radius,
                std,
                ..
            } => {
                let extent = radius + 3.0 * std;
                (
                    vec![center[0] - extent, center[1] - extent],
                    vec![center[0] + extent, center[1] + extent],
                )
            }
            DataSource::Bernoulli { .. } | DataSource::Csv { .. } => {
                let mut low = vec![f64::INFINITY; d];
                let mut high = vec![f64::NEG_INFINITY; d];
                for p in points {
                    for (axis, &x) in p.iter().enumerate() {
                        low[axis] = low[axis].min(x);
                        high[axis] = high[axis].max(x);
                    }
                }
                (low, high)
            }
        }
    }
}

/// Draws `n` points of dimension `d`; deterministic under the rng state.
pub fn gen_points(
    source: &DataSource,
    n: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    source.validate(d)?;
    match source {
        DataSource::UniformBox { low, high } => Ok((0..n)
            .map(|_| {
                (0..d)
                    .map(|axis| rng.random_range(low[axis]..high[axis]))
                    .collect()
            })
            .collect()),
        DataSource::GaussianMixture { centers, std } => Ok((0..n)
            .map(|_| {
                let c = &centers[rng.random_range(0..centers.len())];
                c.iter()
                    .map(|&x| x + std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()),
        DataSource::ClusteredRing {
            center,
            radius,
            clusters,
            std,
        } => Ok((0..n)
            .map(|_| {
                let j = rng.random_range(0..*clusters);
                let angle = std::f64::consts::TAU * j as f64 / *clusters as f64;
                vec![
                    center[0] + radius * angle.cos() + std * rng.sample::<f64, _>(StandardNormal),
                    center[1] + radius * angle.sin() + std * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect()),
        DataSource::Bernoulli { .. } => Err(Error::config(
            "bernoulli source generates records, not points",
        )),
        DataSource::Csv { path } => {
            let points = read_points_csv(path)?;
            if points.iter().any(|p| p.len() != d) {
                return Err(Error::config(format!("csv points are not {d}-dimensional")));
            }
            if points.len() < n {
                return Err(Error::config(format!(
                    "csv has {} points, config needs {n}",
                    points.len()
                )));
            }
            Ok(points.into_iter().take(n).collect())
        }
    }
}

/// Draws `n` qualifying-record flags.
pub fn gen_records(source: &DataSource, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
    match source {
        DataSource::Bernoulli { p } => {
            Ok((0..n).map(|_| rng.random_range(0.0..1.0) < *p).collect())
        }
        _ => Err(Error::config("record generation needs a bernoulli source")),
    }
}

/// Reads points from a CSV file with header `x1,...,xd`.
pub fn read_points_csv(path: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    for (i, name) in headers.iter().enumerate() {
        let expected = format!("x{}", i + 1);
        if name != expected {
            return Err(Error::config(format!(
                "csv header column {i} is `{name}`, expected `{expected}`"
            )));
        }
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let point = record
            .iter()
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("bad csv value `{field}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(point);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn uniform_box_stays_inside() {
        let source = DataSource::UniformBox {
            low: vec![0.0, 0.0],
            high: vec![1.0, 1.0],
        };
        let points = gen_points(&source, 10, 2, &mut rng(1)).unwrap();
        assert_eq!(points.len(), 10);
        assert!(points
            .iter()
            .all(|p| p.iter().all(|&x| (0.0..1.0).contains(&x))));
    }

    #[test]
    fn fixed_seed_reproduces_exactly() {
        let source = DataSource::GaussianMixture {
            centers: vec![vec![0.0, 0.0], vec![5.0, 5.0]],
            std: 1.0,
        };
        let a = gen_points(&source, 25, 2, &mut rng(2)).unwrap();
        let b = gen_points(&source, 25, 2, &mut rng(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_variance_mixture_hits_centers() {
        let centers = vec![vec![1.0, 2.0], vec![-3.0, 4.0]];
        let source = DataSource::GaussianMixture {
            centers: centers.clone(),
            std: 0.0,
        };
        let points = gen_points(&source, 40, 2, &mut rng(3)).unwrap();
        assert!(points.iter().all(|p| centers.contains(p)));
    }

    #[test]
    fn unknown_generator_shapes_error() {
        let source = DataSource::Bernoulli { p: 0.5 };
        assert!(gen_points(&source, 5, 2, &mut rng(4)).is_err());
        let records = gen_records(&source, 1000, &mut rng(4)).unwrap();
        let ones = records.iter().filter(|&&b| b).count();
        assert!((ones as f64 / 1000.0 - 0.5).abs() < 0.06);
        assert!(gen_records(
            &DataSource::UniformBox {
                low: vec![0.0],
                high: vec![1.0]
            },
            5,
            &mut rng(4)
        )
        .is_err());
    }

    #[test]
    fn csv_roundtrip_and_header_check() {
        let dir = std::env::temp_dir().join(format!("geopriv-data-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let good = dir.join("points.csv");
        std::fs::write(&good, "x1,x2\n1.0,2.0\n-0.5,3.25\n").unwrap();
        let points = read_points_csv(good.to_str().unwrap()).unwrap();
        assert_eq!(points, vec![vec![1.0, 2.0], vec![-0.5, 3.25]]);

        let bad = dir.join("bad.csv");
        std::fs::write(&bad, "a,b\n1.0,2.0\n").unwrap();
        assert!(read_points_csv(bad.to_str().unwrap()).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
