//! Manifest CSV reading and writing.
//!
//! Columns: `sample_id, image_ref, instrument, source_image_id, sol,
//! site_id, single_label, multi_labels, campaign, lat0, lon0, dlat, dlon`.
//! Empty cells mean "absent"; `multi_labels` is semicolon separated.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use super::catalog::csv_to_dataset;
use super::{ClassCatalog, DatasetError, Result, SampleRecord};
use crate::archive::GeoRef;

pub const MANIFEST_COLUMNS: [&str; 13] = [
    "sample_id",
    "image_ref",
    "instrument",
    "source_image_id",
    "sol",
    "site_id",
    "single_label",
    "multi_labels",
    "campaign",
    "lat0",
    "lon0",
    "dlat",
    "dlon",
];

pub fn load_manifest(path: impl AsRef<Path>, catalog: &ClassCatalog) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_manifest(file, catalog).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_manifest<R: Read>(reader: R, catalog: &ClassCatalog) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_to_dataset(Path::new("<manifest>"), e))?
        .clone();
    let mut columns = [0usize; MANIFEST_COLUMNS.len()];
    for (slot, name) in columns.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MalformedRow {
                line: 1,
                reason: format!("missing column {name:?}"),
            })?;
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_to_dataset(Path::new("<manifest>"), e))?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(columns[i]).unwrap_or("");
        let malformed = |reason: String| DatasetError::MalformedRow { line, reason };

        let sample_id = cell(0).to_string();
        if sample_id.is_empty() {
            return Err(malformed("empty sample_id".into()));
        }
        if !seen.insert(sample_id.clone()) {
            return Err(DatasetError::DuplicateSampleId { line, id: sample_id });
        }
        let instrument = cell(2).parse().map_err(malformed)?;
        let sol = match cell(4) {
            "" => None,
            s => Some(
                s.parse::<u32>()
                    .map_err(|_| malformed(format!("sol {s:?} is not a nonnegative integer")))?,
            ),
        };
        let class = |name: &str| {
            catalog.id_of(name).ok_or_else(|| DatasetError::UnknownClass {
                line,
                name: name.to_string(),
            })
        };
        let single_label = match cell(6) {
            "" => None,
            s => Some(class(s)?),
        };
        let multi_labels = cell(7)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(class)
            .collect::<Result<BTreeSet<_>>>()?;
        let campaign = cell(8).parse().map_err(malformed)?;

        let geo: Vec<&str> = (9..13).map(cell).collect();
        let georef = if geo.iter().all(|s| s.is_empty()) {
            None
        } else {
            let mut vals = [0.0; 4];
            for (v, s) in vals.iter_mut().zip(&geo) {
                *v = s
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| malformed(format!("georeference value {s:?} is not a number")))?;
            }
            Some(GeoRef {
                lat0: vals[0],
                lon0: vals[1],
                dlat_per_row: vals[2],
                dlon_per_col: vals[3],
            })
        };

        records.push(SampleRecord {
            sample_id,
            image_ref: cell(1).into(),
            instrument,
            source_image_id: cell(3).to_string(),
            sol,
            site_id: cell(5).to_string(),
            single_label,
            multi_labels,
            campaign,
            georef,
        });
    }
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord], catalog: &ClassCatalog) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| csv_to_dataset(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(MANIFEST_COLUMNS).map_err(err)?;
    for r in records {
        let multi: Vec<&str> = r.multi_labels.iter().map(|&c| catalog.name(c)).collect();
        let geo = r.georef.map_or_else(
            || vec![String::new(); 4],
            |g| {
                [g.lat0, g.lon0, g.dlat_per_row, g.dlon_per_col]
                    .iter()
                    .map(|v| v.to_string())
                    .collect()
            },
        );
        let mut row = vec![
            r.sample_id.clone(),
            r.image_ref.to_string_lossy().into_owned(),
            r.instrument.to_string(),
            r.source_image_id.clone(),
            r.sol.map(|s| s.to_string()).unwrap_or_default(),
            r.site_id.clone(),
            r.single_label.map(|c| catalog.name(c).to_string()).unwrap_or_default(),
            multi.join(";"),
            r.campaign.to_string(),
        ];
        row.extend(geo);
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{Campaign, Instrument};

    const HEADER: &str = "sample_id,image_ref,instrument,source_image_id,sol,site_id,single_label,multi_labels,campaign,lat0,lon0,dlat,dlon\n";

    #[test]
    fn header_only_manifest_is_empty() {
        let recs = read_manifest(HEADER.as_bytes(), &ClassCatalog::hirise()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn rows_preserve_order_and_fields() {
        let text = format!(
            "{HEADER}a,img/a.png,HIRISE,ESP_1,,,Crater,,PRIMARY,-70,10,-0.001,0.001\n\
             b,img/b.png,HIRISE,ESP_1,,,Spider,,SECOND_CAMPAIGN,,,,\n\
             c,img/c.png,HIRISE,ESP_2,,,Other,,,,,,\n"
        );
        let cat = ClassCatalog::hirise();
        let recs = read_manifest(text.as_bytes(), &cat).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(recs[0].single_label, cat.id_of("Crater"));
        assert_eq!(recs[0].georef.unwrap().lat0, -70.0);
        assert_eq!(recs[1].campaign, Campaign::SecondCampaign);
        assert!(recs[1].georef.is_none());
        assert_eq!(recs[2].instrument, Instrument::Hirise);
    }

    #[test]
    fn unknown_class_names_the_row() {
        let text = format!("{HEADER}a,a.png,HIRISE,E,,,Crater,,,,,,\nb,b.png,HIRISE,E,,,Volcano,,,,,,\n");
        let err = read_manifest(text.as_bytes(), &ClassCatalog::hirise()).unwrap_err();
        assert!(
            matches!(&err, DatasetError::UnknownClass { line: 3, name } if name == "Volcano"),
            "{err:?}"
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{HEADER}a,a.png,HIRISE,E,,,,,,,,,\na,b.png,HIRISE,E,,,,,,,,,\n");
        let err = read_manifest(text.as_bytes(), &ClassCatalog::hirise()).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateSampleId { line: 3, .. }));
    }

    #[test]
    fn malformed_sol_reports_line() {
        let text = format!("{HEADER}a,a.png,MAHLI,,-4,,,,,,,,\n");
        let err = read_manifest(text.as_bytes(), &ClassCatalog::hirise()).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn multi_labels_split_on_semicolons() {
        let cat = ClassCatalog::mer();
        let text = format!("{HEADER}a,a.png,PANCAM_L,,,site7,,Soil; Sky,,,,,\n");
        let recs = read_manifest(text.as_bytes(), &cat).unwrap();
        assert_eq!(recs[0].multi_labels.len(), 2);
        assert_eq!(recs[0].site_id, "site7");
    }

    #[test]
    fn write_then_read_is_identity() {
        let cat = ClassCatalog::mer();
        let text = format!(
            "{HEADER}a,a.png,PANCAM_L,,12,site7,,Soil;Sky,,-1.5,2.25,0.001,-0.002\nb,b.png,MAHLI,,3,,Sky,,SECOND_CAMPAIGN,,,,\n"
        );
        let recs = read_manifest(text.as_bytes(), &cat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_manifest(&path, &recs, &cat).unwrap();
        assert_eq!(load_manifest(&path, &cat).unwrap(), recs);
    }
}
