//! Analytical models: candidate-space growth from row shuffling, the
//! register-file-bounded operation intensity of tiled SpMM, and the data
//! reuse a device needs to stay compute-bound.

use std::path::Path;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::formats::{check_group_size, PatternKind};

/// Bytes per value assumed by the reuse models (half precision).
pub const DEFAULT_BYTES_PER_VALUE: f64 = 2.0;

const A100_LIKE: &str = include_str!("../../profiles/reference-a100-like.json");
const T4_LIKE: &str = include_str!("../../profiles/reference-t4-like.json");

/// Throughput, bandwidth and register budget of a device.
///
/// The bundled profiles are calibrated approximations, not vendor data. The
/// A100-like bandwidth figure is chosen so that [`required_reuse`] lands on
/// 63 MACs per loaded value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareModel {
    #[serde(default)]
    pub name: String,
    pub peak_mac_per_s: f64,
    pub llc_bandwidth_bytes_per_s: f64,
    pub bytes_per_value: f64,
    pub regfile_size: usize,
}

impl HardwareModel {
    pub fn reference_a100_like() -> Self {
        serde_json::from_str(A100_LIKE).expect("bundled profile parses")
    }

    pub fn reference_t4_like() -> Self {
        serde_json::from_str(T4_LIKE).expect("bundled profile parses")
    }

    /// Looks up a bundled profile by name.
    pub fn bundled(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "reference-a100-like" | "a100" => Some(Self::reference_a100_like()),
            "reference-t4-like" | "t4" => Some(Self::reference_t4_like()),
            _ => None,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let hw: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.peak_mac_per_s)
            || !positive(self.llc_bandwidth_bytes_per_s)
            || !positive(self.bytes_per_value)
            || self.regfile_size == 0
        {
            return Err(Error::params(format!(
                "hardware model '{}' has a non-positive field",
                self.name
            )));
        }
        Ok(())
    }
}

/// Number of ways to partition `m` rows into unordered groups of `v`:
/// `m! / (v!)^(m/v)`.
pub fn partition_count(m: usize, v: usize) -> Result<BigUint> {
    check_group_size(m, v)?;
    let factorial = |n: usize| (1..=n as u64).fold(BigUint::from(1u32), |acc, k| acc * k);
    Ok(factorial(m) / factorial(v).pow((m / v) as u32))
}

/// Natural log of [`partition_count`], via log-gamma.
pub fn flexibility_log_gain(m: usize, v: usize) -> Result<f64> {
    check_group_size(m, v)?;
    Ok(ln_gamma(m as f64 + 1.0) - (m / v) as f64 * ln_gamma(v as f64 + 1.0))
}

fn check_regfile(regfile_size: usize) -> Result<()> {
    if regfile_size == 0 {
        return Err(Error::params("register file size must be at least 1"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::params(format!("alpha={alpha} must lie in (0, 1]")));
    }
    Ok(())
}

/// Side of the square accumulator tile that fills the register file.
pub fn tile_opt_dense(regfile_size: usize) -> f64 {
    (regfile_size as f64).sqrt()
}

/// Best dense-GEMM reuse in flop per byte: `sqrt(regfile) / 2`.
pub fn reuse_dense(regfile_size: usize) -> f64 {
    tile_opt_dense(regfile_size) / 2.0
}

/// `sqrt(alpha) * reuse_dense(regfile)`: the continuous optimum of the
/// sparse-tile reuse problem.
pub fn max_reuse_closed_form(alpha: f64, regfile_size: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_regfile(regfile_size)?;
    Ok(alpha.sqrt() * reuse_dense(regfile_size))
}

/// Reuse of a `tm x tn` accumulator tile over a sparse operand of density
/// `alpha`; the reduction depth cancels.
pub fn tile_reuse(alpha: f64, tm: usize, tn: usize) -> f64 {
    let (tm, tn) = (tm as f64, tn as f64);
    2.0 * alpha * tm * tn / ((alpha * tm + tn) * DEFAULT_BYTES_PER_VALUE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReuseOptimum {
    pub flop_per_byte: f64,
    pub tm: usize,
    pub tn: usize,
}

/// Exhaustive search over integer tiles with `tm * tn <= regfile`. The first
/// maximizer in `(tm, tn)` ascending order wins.
pub fn max_reuse_bruteforce(alpha: f64, regfile_size: usize) -> Result<ReuseOptimum> {
    check_alpha(alpha)?;
    check_regfile(regfile_size)?;
    let mut best = ReuseOptimum {
        flop_per_byte: f64::MIN,
        tm: 0,
        tn: 0,
    };
    for tm in 1..=regfile_size {
        for tn in 1..=regfile_size / tm {
            let f = tile_reuse(alpha, tm, tn);
            if f > best.flop_per_byte {
                best = ReuseOptimum {
                    flop_per_byte: f,
                    tm,
                    tn,
                };
            }
        }
    }
    Ok(best)
}

/// MACs that must be performed per value loaded from the last-level cache
/// to reach peak throughput.
pub fn required_reuse(hw: &HardwareModel) -> Result<f64> {
    hw.validate()?;
    Ok(hw.peak_mac_per_s / (hw.llc_bandwidth_bytes_per_s / hw.bytes_per_value))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityReport {
    pub pattern: PatternKind,
    pub alpha: f64,
    pub v: usize,
    pub reuse_flop_per_byte: f64,
    pub reuse_dense_flop_per_byte: f64,
    pub ratio_to_dense: f64,
    pub tile_opt: f64,
    /// Structured pattern whose block size is below the optimal tile; its
    /// reuse is modeled as a dense tile of side `V`, i.e. `V / 2`.
    pub block_limited: bool,
}

/// Achievable reuse of `pattern` relative to a dense GEMM.
///
/// Unstructured and balanced operands stay sparse inside a tile and reach
/// `sqrt(alpha)` of dense reuse. Block-wise, vector-wise and shuffled
/// block-wise operands tile into dense blocks and reach dense reuse when
/// `V >= sqrt(regfile)`.
pub fn intensity_report(
    pattern: PatternKind,
    alpha: f64,
    v: usize,
    hw: &HardwareModel,
) -> Result<IntensityReport> {
    hw.validate()?;
    check_alpha(alpha)?;
    let regfile = hw.regfile_size;
    let dense = reuse_dense(regfile);
    let tile_opt = tile_opt_dense(regfile);
    let (reuse, block_limited) = if pattern.is_tiled_dense() {
        if v == 0 {
            return Err(Error::params("block size V must be at least 1"));
        }
        if v as f64 >= tile_opt {
            (dense, false)
        } else {
            (v as f64 / 2.0, true)
        }
    } else {
        (max_reuse_closed_form(alpha, regfile)?, false)
    };
    Ok(IntensityReport {
        pattern,
        alpha,
        v,
        reuse_flop_per_byte: reuse,
        reuse_dense_flop_per_byte: dense,
        ratio_to_dense: reuse / dense,
        tile_opt,
        block_limited,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hw(regfile: usize) -> HardwareModel {
        HardwareModel {
            name: "test".into(),
            peak_mac_per_s: 1.0,
            llc_bandwidth_bytes_per_s: 1.0,
            bytes_per_value: 2.0,
            regfile_size: regfile,
        }
    }

    #[test]
    fn flexibility_values() {
        assert_eq!(flexibility_log_gain(128, 128).unwrap(), 0.0);
        assert!((flexibility_log_gain(4, 2).unwrap() - 6f64.ln()).abs() < 1e-12);
        assert!(flexibility_log_gain(512, 128).unwrap() > 700.0);
        assert!(matches!(flexibility_log_gain(6, 4), Err(Error::BadParams(_))));
        assert_eq!(partition_count(4, 2).unwrap(), BigUint::from(6u32));
        assert_eq!(partition_count(6, 2).unwrap(), BigUint::from(90u32));
    }

    #[test]
    fn dense_reuse() {
        assert_eq!(reuse_dense(4096), 32.0);
        assert_eq!(reuse_dense(4), 1.0);
        assert_eq!(reuse_dense(16384), 64.0);
    }

    #[test]
    fn closed_form() {
        assert_eq!(max_reuse_closed_form(1.0, 4096).unwrap(), 32.0);
        assert_eq!(max_reuse_closed_form(0.25, 4096).unwrap(), 16.0);
        assert!((max_reuse_closed_form(0.5, 4096).unwrap() - 22.627_416_997_969_52).abs() < 1e-9);
        assert!(max_reuse_closed_form(0.0, 4096).is_err());
        assert!(max_reuse_closed_form(0.5, 0).is_err());
    }

    #[test]
    fn bruteforce_optima() {
        let dense = max_reuse_bruteforce(1.0, 4096).unwrap();
        assert_eq!((dense.tm, dense.tn, dense.flop_per_byte), (64, 64, 32.0));
        let quarter = max_reuse_bruteforce(0.25, 4096).unwrap();
        assert_eq!((quarter.tm, quarter.tn), (128, 32));
        assert!((quarter.flop_per_byte - 16.0).abs() < 1e-12);
        let one = max_reuse_bruteforce(0.5, 1).unwrap();
        assert_eq!((one.tm, one.tn), (1, 1));
    }

    #[test]
    fn required_reuse_ratio() {
        let toy = HardwareModel {
            name: "toy".into(),
            peak_mac_per_s: 100.0,
            llc_bandwidth_bytes_per_s: 50.0,
            bytes_per_value: 1.0,
            regfile_size: 1,
        };
        assert_eq!(required_reuse(&toy).unwrap(), 2.0);
        let doubled = HardwareModel {
            llc_bandwidth_bytes_per_s: 100.0,
            ..toy.clone()
        };
        assert_eq!(required_reuse(&doubled).unwrap(), 1.0);
        let a100 = required_reuse(&HardwareModel::reference_a100_like()).unwrap();
        assert!((a100 - 63.0).abs() <= 1.0, "{a100}");
        assert!(required_reuse(&HardwareModel { bytes_per_value: 0.0, ..toy }).is_err());
    }

    #[test]
    fn intensity_cases() {
        let r = intensity_report(PatternKind::ShflBw, 0.25, 64, &hw(4096)).unwrap();
        assert_eq!(r.ratio_to_dense, 1.0);
        assert!(!r.block_limited);
        let r = intensity_report(PatternKind::Unstructured, 0.25, 0, &hw(4096)).unwrap();
        assert_eq!(r.ratio_to_dense, 0.5);
        assert_eq!(r.reuse_flop_per_byte, 16.0);
        let r = intensity_report(PatternKind::ShflBw, 0.25, 32, &hw(4096)).unwrap();
        assert_eq!((r.reuse_flop_per_byte, r.ratio_to_dense), (16.0, 0.5));
        assert!(r.block_limited);
        assert!(intensity_report(PatternKind::BlockWise, 0.25, 0, &hw(4096)).is_err());
    }

    #[test]
    fn bundled_profiles() {
        assert!(HardwareModel::bundled("reference-T4-like").is_some());
        assert!(HardwareModel::bundled("a100").is_some());
        assert!(HardwareModel::bundled("h100").is_none());
        HardwareModel::reference_t4_like().validate().unwrap();
    }
}
