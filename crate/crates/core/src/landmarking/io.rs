use std::fs;
use std::path::Path;

use super::{BBox, Landmark, LandmarkError, Result, SalienceParams};

const LANDMARK_HEADER: [&str; 7] = [
    "source_image_id",
    "row0",
    "col0",
    "row1",
    "col1",
    "peak_salience",
    "area_px",
];

fn io_err(path: &Path, source: std::io::Error) -> LandmarkError {
    LandmarkError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> LandmarkError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        kind => LandmarkError::Parse {
            line,
            reason: format!("{kind:?}"),
        },
    }
}

pub fn write_landmarks_csv(path: impl AsRef<Path>, landmarks: &[Landmark]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(LANDMARK_HEADER).map_err(|e| csv_err(path, e))?;
    for l in landmarks {
        w.write_record([
            l.source_image_id.clone(),
            l.bbox.row0.to_string(),
            l.bbox.col0.to_string(),
            l.bbox.row1.to_string(),
            l.bbox.col1.to_string(),
            format!("{:.6}", l.peak_salience),
            l.area_px.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_landmarks_csv(path: impl AsRef<Path>) -> Result<Vec<Landmark>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(LANDMARK_HEADER.iter().copied()) {
        return Err(LandmarkError::Parse {
            line: 1,
            reason: format!("expected header {}", LANDMARK_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| -> Result<usize> {
            rec[i].trim().parse().map_err(|_| LandmarkError::Parse {
                line,
                reason: format!("{} is not an integer: {:?}", LANDMARK_HEADER[i], &rec[i]),
            })
        };
        let bbox = BBox {
            row0: num(1)?,
            col0: num(2)?,
            row1: num(3)?,
            col1: num(4)?,
        };
        if bbox.row1 <= bbox.row0 || bbox.col1 <= bbox.col0 {
            return Err(LandmarkError::Parse {
                line,
                reason: "empty bounding box".into(),
            });
        }
        let peak_salience = rec[5].trim().parse().map_err(|_| LandmarkError::Parse {
            line,
            reason: format!("peak_salience is not a number: {:?}", &rec[5]),
        })?;
        out.push(Landmark {
            source_image_id: rec[0].to_string(),
            bbox,
            peak_salience,
            area_px: num(6)?,
        });
    }
    Ok(out)
}

/// Flat `key=value` text, one parameter per line.
pub fn write_params(path: impl AsRef<Path>, p: &SalienceParams) -> Result<()> {
    let path = path.as_ref();
    let text = format!(
        "inner_window={}\nouter_window={}\nw_canny={}\nw_emd={}\nsalience_threshold={}\n\
         canny_low={}\ncanny_high={}\ncanny_sigma={}\nhistogram_bins={}\nmin_area={}\n",
        p.inner_window,
        p.outer_window,
        p.w_canny,
        p.w_emd,
        p.salience_threshold,
        p.canny_low,
        p.canny_high,
        p.canny_sigma,
        p.histogram_bins,
        p.min_area
    );
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a file written by [`write_params`]. Missing keys keep their
/// defaults; unknown keys are rejected.
pub fn read_params(path: impl AsRef<Path>) -> Result<SalienceParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut p = SalienceParams::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |reason: String| LandmarkError::Parse { line: i + 1, reason };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(format!("expected key=value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| perr(format!("{key}: bad integer {value:?}")))
        };
        let real = || {
            value
                .parse::<f64>()
                .map_err(|_| perr(format!("{key}: bad number {value:?}")))
        };
        match key {
            "inner_window" => p.inner_window = int()?,
            "outer_window" => p.outer_window = int()?,
            "w_canny" => p.w_canny = real()?,
            "w_emd" => p.w_emd = real()?,
            "salience_threshold" => p.salience_threshold = real()?,
            "canny_low" => p.canny_low = real()?,
            "canny_high" => p.canny_high = real()?,
            "canny_sigma" => p.canny_sigma = real()?,
            "histogram_bins" => p.histogram_bins = int()?,
            "min_area" => p.min_area = int()?,
            _ => return Err(perr(format!("unknown key {key:?}"))),
        }
    }
    p.validate()?;
    Ok(p)
}
