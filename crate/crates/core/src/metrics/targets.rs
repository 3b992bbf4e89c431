use std::path::Path;

use crate::{Error, Result};

/// Target observations for goal-reaching evaluation, with an optional set
/// of observation indices over which distances are measured.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetStateSet {
    pub targets: Vec<Vec<f64>>,
    pub header: Option<Vec<String>>,
    pub mask: Option<Vec<usize>>,
}

impl TargetStateSet {
    pub fn new(targets: Vec<Vec<f64>>, mask: Option<Vec<usize>>) -> Result<Self> {
        let set = Self {
            targets,
            header: None,
            mask,
        };
        set.check_shape()?;
        Ok(set)
    }

    /// One target per line, comma-separated. The first line may instead
    /// name the dimensions. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header = None;
        let mut targets = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(row) => {
                    if let Some(bad) = row.iter().position(|x| !x.is_finite()) {
                        return Err(Error::InvalidArgument(format!(
                            "target line {}: value {} is not finite",
                            lineno + 1,
                            bad + 1
                        )));
                    }
                    targets.push(row)
                }
                Err(_) if targets.is_empty() && header.is_none() => {
                    header = Some(fields.iter().map(|s| s.to_string()).collect());
                }
                Err(e) => {
                    return Err(Error::InvalidArgument(format!("target line {}: {e}", lineno + 1)));
                }
            }
        }
        let set = Self {
            targets,
            header,
            mask: None,
        };
        set.check_shape()?;
        Ok(set)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn with_mask(mut self, mask: Option<Vec<usize>>) -> Self {
        self.mask = mask;
        self
    }

    fn check_shape(&self) -> Result<()> {
        let Some(first) = self.targets.first() else {
            return Err(Error::InvalidArgument("target set is empty".into()));
        };
        for (i, t) in self.targets.iter().enumerate() {
            if t.len() != first.len() {
                return Err(Error::DimMismatch {
                    context: format!("target {}", i + 1),
                    expected: first.len(),
                    actual: t.len(),
                });
            }
        }
        if let Some(h) = &self.header {
            if h.len() != first.len() {
                return Err(Error::DimMismatch {
                    context: "target header".into(),
                    expected: first.len(),
                    actual: h.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Checks the targets against an observation width and returns the
    /// effective mask (`default_mask` when none was given).
    pub fn resolve_mask(&self, obs_dim: usize, default_mask: Vec<usize>) -> Result<Vec<usize>> {
        self.check_shape()?;
        let width = self.targets[0].len();
        if width != obs_dim {
            return Err(Error::DimMismatch {
                context: "target observation".into(),
                expected: obs_dim,
                actual: width,
            });
        }
        let mask = self.mask.clone().unwrap_or(default_mask);
        if mask.is_empty() {
            return Err(Error::InvalidArgument("distance mask is empty".into()));
        }
        if let Some(&bad) = mask.iter().find(|&&i| i >= obs_dim) {
            return Err(Error::DimMismatch {
                context: "distance mask index".into(),
                expected: obs_dim,
                actual: bad + 1,
            });
        }
        Ok(mask)
    }
}

/// Squared Euclidean distance over the masked dimensions.
pub fn masked_sq_distance(a: &[f64], b: &[f64], mask: &[usize]) -> f64 {
    mask.iter().map(|&i| (a[i] - b[i]).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_rows() {
        let set = TargetStateSet::parse("x, y, vx, vy\n0.5,-0.5,0,0\n\n# note\n1,1,0,0\n").unwrap();
        assert_eq!(set.header.as_ref().unwrap()[2], "vx");
        assert_eq!(set.targets, vec![vec![0.5, -0.5, 0.0, 0.0], vec![1.0, 1.0, 0.0, 0.0]]);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(TargetStateSet::parse("").is_err());
        assert!(TargetStateSet::parse("x,y\n").is_err());
        assert!(TargetStateSet::parse("1,2\n3\n").is_err());
        assert!(TargetStateSet::parse("1,2\nfoo,3\n").is_err());
    }

    #[test]
    fn mask_is_checked() {
        let set = TargetStateSet::parse("0,0,0,0").unwrap();
        assert!(set.resolve_mask(3, vec![0]).is_err());
        assert_eq!(set.resolve_mask(4, vec![0, 1]).unwrap(), vec![0, 1]);
        let set = set.with_mask(Some(vec![7]));
        assert!(set.resolve_mask(4, vec![0, 1]).is_err());
    }
}
