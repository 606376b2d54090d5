//! `--fix` and `--grid` values.

use crate::config::parse_pairs;
use crate::error::CliError;

const MAX_GRID_POINTS: usize = 10_000_000;

/// Named values consumed by a command; leftovers are an error.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    flag: &'static str,
    items: Vec<(String, Vec<f64>)>,
}

impl Overrides {
    /// `--fix name=value,...`, values in file units (MHz, mA, W).
    pub fn fix(spec: Option<&str>) -> Result<Self, CliError> {
        let mut items = Vec::new();
        for (k, v) in parse_pairs(spec.unwrap_or(""), "--fix")? {
            let x: f64 = v
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| CliError::input(format!("--fix {k}: `{v}` is not a finite number")))?;
            if items.iter().any(|(n, _)| *n == k) {
                return Err(CliError::input(format!("--fix {k} given twice")));
            }
            items.push((k, vec![x]));
        }
        Ok(Self { flag: "--fix", items })
    }

    /// `--grid axis=start:stop:step;axis=v1,v2,...`.
    pub fn grid(spec: Option<&str>) -> Result<Self, CliError> {
        let mut items = Vec::new();
        for part in spec.unwrap_or("").split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("--grid: expected axis=values, got `{part}`")))?;
            let name = name.trim().to_string();
            if items.iter().any(|(n, _)| *n == name) {
                return Err(CliError::input(format!("--grid axis `{name}` given twice")));
            }
            items.push((name.clone(), parse_axis(&name, values.trim())?));
        }
        Ok(Self { flag: "--grid", items })
    }

    pub fn take(&mut self, name: &str) -> Option<Vec<f64>> {
        let k = self.items.iter().position(|(n, _)| n == name)?;
        Some(self.items.remove(k).1)
    }

    pub fn take_scalar(&mut self, name: &str) -> Result<Option<f64>, CliError> {
        match self.take(name) {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(_) => Err(CliError::input(format!("{} {name} takes a single value", self.flag))),
        }
    }

    pub fn take_or(&mut self, name: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.take_scalar(name)?.unwrap_or(default))
    }

    /// Remaining entries as `(name, value)` pairs for the fitting engine.
    pub fn into_pairs(self) -> Vec<(String, f64)> {
        self.items.into_iter().map(|(n, v)| (n, v[0])).collect()
    }

    /// Fail on anything the command did not consume.
    pub fn finish(self, allowed: &[&str]) -> Result<(), CliError> {
        match self.items.first() {
            None => Ok(()),
            Some((name, _)) if allowed.is_empty() => {
                Err(CliError::input(format!("{} is not used by this command (got `{name}`)", self.flag)))
            }
            Some((name, _)) => Err(CliError::input(format!(
                "{}: unknown name `{name}` (expected one of {})",
                self.flag,
                allowed.join(", ")
            ))),
        }
    }
}

fn parse_axis(name: &str, values: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| CliError::input(format!("--grid {name}: `{}` is not a finite number", s.trim())))
    };
    if values.contains(':') {
        let parts: Vec<&str> = values.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(CliError::input(format!("--grid {name}: ranges are start:stop:step")));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step == 0.0 || (b - a) / step < 0.0 {
            return Err(CliError::input(format!("--grid {name}: step must be nonzero and point from start to stop")));
        }
        let count = ((b - a) / step + 1e-9).floor() + 1.0;
        if count > MAX_GRID_POINTS as f64 {
            return Err(CliError::input(format!("--grid {name}: more than {MAX_GRID_POINTS} points")));
        }
        Ok((0..count as usize).map(|k| a + k as f64 * step).collect())
    } else {
        values.split(',').map(num).collect()
    }
}

/// Evenly spaced values including both ends.
pub fn range(a: f64, b: f64, step: f64) -> Vec<f64> {
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| a + k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ranges_and_lists() {
        let mut g = Overrides::grid(Some("kerr=0,-0.1,-0.2; omega2=0:1:0.25")).unwrap();
        assert_eq!(g.take("kerr").unwrap(), vec![0.0, -0.1, -0.2]);
        assert_eq!(g.take("omega2").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(g.take("omega2").is_none());
        g.finish(&[]).unwrap();

        let g = Overrides::grid(Some("x=1:0:-0.5")).unwrap();
        assert_eq!(g.items[0].1, vec![1.0, 0.5, 0.0]);
        assert!(Overrides::grid(Some("x=0:1:-0.5")).is_err());
        assert!(Overrides::grid(Some("x=0:1")).is_err());
        assert!(Overrides::grid(Some("x=a,b")).is_err());
    }

    #[test]
    fn fix_leftovers_are_errors() {
        let mut f = Overrides::fix(Some("nbar_m=0.5, chi=1")).unwrap();
        assert_eq!(f.take_scalar("nbar_m").unwrap(), Some(0.5));
        let e = f.finish(&["nbar_m"]).unwrap_err().to_string();
        assert!(e.contains("chi"), "{e}");
        assert!(Overrides::fix(Some("a=1,a=2")).is_err());
        assert!(Overrides::fix(Some("a=nan")).is_err());
    }
}
