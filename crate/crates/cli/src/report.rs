use std::fs;
use std::path::{Path, PathBuf};

use marstag::calibration::read_reliability_csv;

use crate::artifacts::{self as art, ensure_dir};
use crate::error::{CliError, Result};
use crate::plot;

/// Inputs to render; at least one must be given.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub reliability: Option<PathBuf>,
    pub per_class: Option<PathBuf>,
    pub confusion: Option<PathBuf>,
    pub shift: Option<PathBuf>,
}

impl ReportInputs {
    /// The standard artifact names inside `dir`.
    pub fn from_dir(dir: &Path) -> Self {
        Self {
            reliability: Some(dir.join(art::RELIABILITY)),
            per_class: Some(dir.join(art::PER_CLASS)),
            confusion: Some(dir.join(art::CONFUSION)),
            shift: Some(dir.join(art::SHIFT)),
        }
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn present(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(format!("{} not found", path.display())))
    }
}

/// Renders every given input into `out_dir` as an SVG figure plus a text
/// table. Every input is checked before anything is written.
pub fn cmd_report(inputs: &ReportInputs, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let given: Vec<&PathBuf> = [&inputs.reliability, &inputs.per_class, &inputs.confusion, &inputs.shift]
        .into_iter()
        .flatten()
        .collect();
    if given.is_empty() {
        return Err(CliError::missing("no report inputs given"));
    }
    for p in &given {
        present(p)?;
    }
    let reliability = match &inputs.reliability {
        Some(p) => {
            let bins = read_reliability_csv(p).map_err(|e| CliError::missing(format!("{}: {e}", p.display())))?;
            if bins.total() == 0 {
                return Err(CliError::missing(format!("{} has no samples", p.display())));
            }
            Some(bins)
        }
        None => None,
    };
    let per_class = match &inputs.per_class {
        Some(p) => {
            let rows = art::read_per_class(p)?;
            if rows.is_empty() {
                return Err(CliError::missing(format!("{} has no classes", p.display())));
            }
            Some(rows)
        }
        None => None,
    };
    let confusion = match &inputs.confusion {
        Some(p) => {
            let t = art::read_confusion(p)?;
            if t.total() == 0 {
                return Err(CliError::missing(format!(
                    "{} is an empty confusion matrix",
                    p.display()
                )));
            }
            Some(t)
        }
        None => None,
    };
    let shift = match &inputs.shift {
        Some(p) => {
            let rows = art::read_shift(p)?;
            if rows.is_empty() {
                return Err(CliError::missing(format!("{} has no classes", p.display())));
            }
            Some(rows)
        }
        None => None,
    };

    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    if let Some(bins) = reliability {
        written.push(write(
            out_dir.join("reliability.svg"),
            &plot::reliability_svg(&bins, "Reliability (test set)"),
        )?);
        written.push(write(out_dir.join("reliability.txt"), &plot::reliability_table(&bins))?);
    }
    if let Some(rows) = per_class {
        written.push(write(out_dir.join("pr_scatter.svg"), &plot::pr_scatter_svg(&rows))?);
        written.push(write(out_dir.join("per_class.txt"), &plot::per_class_table(&rows))?);
    }
    if let Some(t) = confusion {
        written.push(write(out_dir.join("confusion.svg"), &plot::confusion_svg(&t))?);
        written.push(write(out_dir.join("confusion.txt"), &plot::confusion_table(&t))?);
    }
    if let Some(rows) = shift {
        written.push(write(out_dir.join("shift.svg"), &plot::shift_svg(&rows))?);
        written.push(write(out_dir.join("shift.txt"), &plot::shift_table(&rows))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::{write_confusion, ConfusionTable};
    use crate::error::ErrorKind;

    #[test]
    fn empty_confusion_is_missing_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("confusion.csv");
        write_confusion(
            &p,
            &ConfusionTable {
                classes: vec!["Crater".into(), "Spider".into()],
                counts: vec![vec![0; 3], vec![0; 3]],
            },
        )
        .unwrap();
        let inputs = ReportInputs {
            confusion: Some(p),
            ..ReportInputs::default()
        };
        let err = cmd_report(&inputs, &dir.path().join("out")).unwrap_err();
        assert_eq!(err.kind, ErrorKind::MissingInput);
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn no_inputs_or_absent_file_is_missing_input() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_report(&ReportInputs::default(), dir.path()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::MissingInput);
        let err = cmd_report(&ReportInputs::from_dir(dir.path()), dir.path()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::MissingInput);
    }

    #[test]
    fn renders_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("confusion.csv");
        write_confusion(
            &p,
            &ConfusionTable {
                classes: vec!["Crater".into(), "Spider".into()],
                counts: vec![vec![4, 1, 1], vec![0, 3, 0]],
            },
        )
        .unwrap();
        let inputs = ReportInputs {
            confusion: Some(p),
            ..ReportInputs::default()
        };
        let a = cmd_report(&inputs, &dir.path().join("a")).unwrap();
        let b = cmd_report(&inputs, &dir.path().join("b")).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }
}
