//! CSV persistence for cohorts and the JSON data dictionary.
//!
//! Layout: `id,age,sex,race,<features...>,<label columns>`. Missing values
//! are empty cells. Floats are written with the shortest representation
//! that parses back to the identical bits, so save/load round trips are
//! exact.

use std::path::Path;

use super::{
    default_schema, CohortError, CohortTable, FeatureSchema, LabelPair, Labels, PatientRecord,
    Phenotype, Provenance, Race, Sex,
};

const FIXED_HEAD: [&str; 4] = ["id", "age", "sex", "race"];

fn label_columns() -> Vec<String> {
    Phenotype::ALL
        .iter()
        .flat_map(|ph| {
            [format!("label_{}_heuristic", ph.key()), format!("label_{}_dx", ph.key())]
        })
        .collect()
}

pub fn save_cohort(table: &CohortTable, path: &Path) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = FIXED_HEAD.iter().map(|s| s.to_string()).collect();
    header.extend(table.schema.names().map(str::to_string));
    header.extend(label_columns());
    w.write_record(&header)?;
    for row in &table.rows {
        let mut rec: Vec<String> = vec![
            row.id.clone(),
            format!("{}", row.age),
            row.sex.to_string(),
            row.race.to_string(),
        ];
        for v in &row.values {
            rec.push(match v {
                Some(x) => format!("{x}"),
                None => String::new(),
            });
        }
        for ph in Phenotype::ALL {
            let pair = row.labels.get(ph);
            rec.push(if pair.heuristic { "1" } else { "0" }.to_string());
            rec.push(if pair.dx { "1" } else { "0" }.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_cohort(path: &Path) -> Result<CohortTable, CohortError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let labels = label_columns();
    if header.len() < FIXED_HEAD.len() + labels.len() {
        return Err(parse_err(1, "header is missing required columns"));
    }
    for (i, want) in FIXED_HEAD.iter().enumerate() {
        if header[i] != *want {
            return Err(parse_err(1, format!("expected column {} to be `{want}`, found `{}`", i + 1, header[i])));
        }
    }
    let tail = header.len() - labels.len();
    for (i, want) in labels.iter().enumerate() {
        if header[tail + i] != *want {
            return Err(parse_err(
                1,
                format!("expected column {} to be `{want}`, found `{}`", tail + i + 1, header[tail + i]),
            ));
        }
    }
    let feature_names = &header[FIXED_HEAD.len()..tail];
    let dictionary = default_schema();
    let mut keep = Vec::with_capacity(feature_names.len());
    for name in feature_names {
        match dictionary.index_of(name) {
            Some(idx) => keep.push(idx),
            None => {
                return Err(parse_err(1, format!("unknown column `{name}` not in the data dictionary")));
            }
        }
    }
    let mut seen = keep.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != keep.len() {
        return Err(parse_err(1, "duplicate feature column"));
    }
    let schema = dictionary.project(&keep);

    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows.len() + 2);
        let get = |i: usize| record.get(i).unwrap_or("");
        let age: f64 = parse_f64(get(1), line, "age")?;
        if !(18.0..=110.0).contains(&age) {
            return Err(parse_err(line, format!("age {age} outside [18, 110]")));
        }
        let sex = match get(2) {
            "F" => Sex::F,
            "M" => Sex::M,
            other => return Err(parse_err(line, format!("bad sex value `{other}`"))),
        };
        let race = match get(3) {
            "Black" => Race::Black,
            "White" => Race::White,
            "Other" => Race::Other,
            other => return Err(parse_err(line, format!("bad race value `{other}`"))),
        };
        let mut values = Vec::with_capacity(schema.len());
        for (j, name) in schema.names().enumerate() {
            let cell = get(FIXED_HEAD.len() + j);
            if cell.is_empty() {
                values.push(None);
            } else {
                let v = parse_f64(cell, line, name)?;
                if matches!(schema.def(j).kind, super::FeatureKind::Count) && v < 0.0 {
                    return Err(parse_err(line, format!("negative count for `{name}`")));
                }
                values.push(Some(v));
            }
        }
        let mut labels_out = Labels::default();
        for (k, ph) in Phenotype::ALL.into_iter().enumerate() {
            let heuristic = parse_label(get(tail + 2 * k), line)?;
            let dx = parse_label(get(tail + 2 * k + 1), line)?;
            *labels_out.get_mut(ph) = LabelPair { heuristic, dx };
        }
        rows.push(PatientRecord {
            id: get(0).to_string(),
            age,
            sex,
            race,
            values,
            labels: labels_out,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(1, "file contains no data rows"));
    }
    Ok(CohortTable {
        schema,
        rows,
        provenance: Provenance::File { path: path.display().to_string() },
    })
}

/// Writes the feature dictionary as a JSON object mapping name to
/// description, in schema order.
pub fn save_data_dictionary(schema: &FeatureSchema, path: &Path) -> Result<(), CohortError> {
    let mut map = serde_json::Map::new();
    for def in schema.entries() {
        map.insert(def.name.clone(), serde_json::Value::String(def.description.clone()));
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(map))
        .expect("string map serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> CohortError {
    CohortError::Parse { line, message: message.into() }
}

fn parse_f64(cell: &str, line: usize, what: &str) -> Result<f64, CohortError> {
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_err(line, format!("bad numeric value `{cell}` for {what}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value for {what}")));
    }
    Ok(v)
}

fn parse_label(cell: &str, line: usize) -> Result<bool, CohortError> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_err(line, format!("bad label value `{other}` (expected 0 or 1)"))),
    }
}
