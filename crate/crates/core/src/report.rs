//! Report files: q table, interaction matrices, heatmaps, regional tests and
//! the run manifest. All renderers are pure functions of their inputs so that
//! identical runs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Factor;
use crate::pipeline::{AnalysisConfig, Cell, GroupReport, ReportBundle};
use crate::svg::heatmap;

/// Marker appended to a q value: `*` for p < 0.01, `†` for p < 0.05.
pub fn significance_marker(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.01 => "*",
        Some(p) if p < 0.05 => "†",
        _ => "",
    }
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn key_columns(g: &GroupReport) -> Vec<String> {
    vec![
        g.key.virus.to_string(),
        g.key.region.to_string(),
        g.key.age_band.map_or_else(|| "all".into(), |a| a.to_string()),
        g.key.sex.map_or_else(|| "all".into(), |s| s.to_string()),
    ]
}

/// One row per group, one column per factor; `NA` where not computed.
pub fn q_table_csv(bundle: &ReportBundle) -> Result<String> {
    let mut header: Vec<String> = ["virus", "region", "age_band", "sex", "n_months"].map(String::from).to_vec();
    header.extend(Factor::ALL.iter().map(|f| f.label().to_string()));
    let mut rows = vec![header];
    for g in &bundle.groups {
        let mut row = key_columns(g);
        row.push(g.n_months.to_string());
        for f in Factor::ALL {
            row.push(match g.factor(f) {
                Some(d) => format!("{:.3}{}", d.result.q, significance_marker(d.result.p_value())),
                None => "NA".into(),
            });
        }
        rows.push(row);
    }
    csv_string(rows)
}

/// Symmetric 7x7 matrix with individual q on the diagonal.
pub fn interaction_csv(group: &GroupReport) -> Result<String> {
    let mut header = vec![String::new()];
    header.extend(Factor::ALL.iter().map(|f| f.label().to_string()));
    let mut rows = vec![header];
    for (f, row) in Factor::ALL.iter().zip(group.interaction_matrix()) {
        let mut r = vec![f.label().to_string()];
        r.extend(row.iter().map(|c| c.map_or_else(|| "NA".into(), |q| format!("{q:.6}"))));
        rows.push(r);
    }
    csv_string(rows)
}

pub fn interaction_svg(group: &GroupReport) -> String {
    heatmap(&format!("{} (n = {} months)", group.key, group.n_months), &group.interaction_matrix())
}

pub fn region_tests_csv(bundle: &ReportBundle) -> Result<String> {
    let mut rows = vec![["variable", "north_n", "south_n", "north_mean", "south_mean", "t", "df", "p_value", "status"]
        .map(String::from)
        .to_vec()];
    for t in &bundle.region_tests {
        let (stat, df, p, status) = match &t.result {
            Cell::Computed(r) => (r.t.to_string(), r.df.to_string(), r.p_value.to_string(), "computed".to_string()),
            Cell::InsufficientData { .. } => (String::new(), String::new(), String::new(), "insufficient-data".into()),
            Cell::Failed { reason } => (String::new(), String::new(), String::new(), format!("failed: {reason}")),
        };
        rows.push(vec![
            t.variable.clone(),
            t.north_n.to_string(),
            t.south_n.to_string(),
            t.north_mean.to_string(),
            t.south_mean.to_string(),
            stat,
            df,
            p,
            status,
        ]);
    }
    csv_string(rows)
}

/// An input file identified by its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(name: &str, path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputDigest {
        name: name.into(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: AnalysisConfig,
    pub inputs: Vec<InputDigest>,
    pub groups: usize,
    pub warnings: Vec<String>,
}

pub fn manifest_json(config: &AnalysisConfig, inputs: &[InputDigest], bundle: &ReportBundle) -> Result<String> {
    let m = Manifest {
        tool: "geodet".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        inputs: inputs.to_vec(),
        groups: bundle.groups.len(),
        warnings: bundle.warnings.clone(),
    };
    Ok(serde_json::to_string_pretty(&m)? + "\n")
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes tables, matrices and heatmaps for a bundle. Returns the paths written.
pub fn write_tables(dir: &Path, bundle: &ReportBundle) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write(dir, "q_table.csv", &q_table_csv(bundle)?, &mut written)?;
    write(dir, "q_table.json", &(serde_json::to_string_pretty(bundle)? + "\n"), &mut written)?;
    write(dir, "region_tests.csv", &region_tests_csv(bundle)?, &mut written)?;
    for g in &bundle.groups {
        let slug = g.key.slug();
        write(dir, &format!("interaction_{slug}.csv"), &interaction_csv(g)?, &mut written)?;
        write(dir, &format!("interaction_{slug}.svg"), &interaction_svg(g), &mut written)?;
    }
    Ok(written)
}

/// Writes every report file including the manifest.
pub fn write_report(
    dir: &Path,
    bundle: &ReportBundle,
    config: &AnalysisConfig,
    inputs: &[InputDigest],
) -> Result<Vec<PathBuf>> {
    let mut written = write_tables(dir, bundle)?;
    write(dir, "run_manifest.json", &manifest_json(config, inputs, bundle)?, &mut written)?;
    Ok(written)
}

/// Reads a bundle back from `q_table.json`.
pub fn read_bundle(path: &Path) -> Result<ReportBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GroupKey, Region, Virus};
    use crate::pipeline::{FactorCell, FactorDetail, InteractionCell};
    use crate::stratify::StrataStrategy;

    fn group() -> GroupReport {
        let factors = Factor::ALL
            .into_iter()
            .map(|f| {
                let q = 0.1 * (f.index() + 1) as f64;
                let cell = if f == Factor::Wind {
                    Cell::InsufficientData { n_months: 5, required: 12 }
                } else {
                    Cell::Computed(FactorDetail {
                        result: crate::model::QResult {
                            q,
                            ssw: 1.0 - q,
                            sst: 1.0,
                            n: 20,
                            l: 4,
                            strata: vec![],
                            significance: Some(crate::model::Significance {
                                p_value: [0.001, 0.03, 0.2][f.index() % 3],
                                method: crate::model::SignificanceMethod::Permutation,
                            }),
                        },
                        breaks: vec![],
                        compacted: false,
                        small_strata: 0,
                    })
                };
                FactorCell { factor: f, strategy: StrataStrategy::default(), cell }
            })
            .collect();
        let interactions = Factor::pairs()
            .into_iter()
            .map(|(a, b)| InteractionCell {
                first: a,
                second: b,
                cell: Cell::Failed { reason: "x".into() },
            })
            .collect();
        GroupReport { key: GroupKey::new(Virus::Rsv, Region::North), n_months: 20, factors, interactions }
    }

    #[test]
    fn markers() {
        assert_eq!(significance_marker(Some(0.009)), "*");
        assert_eq!(significance_marker(Some(0.01)), "†");
        assert_eq!(significance_marker(Some(0.049)), "†");
        assert_eq!(significance_marker(Some(0.05)), "");
        assert_eq!(significance_marker(None), "");
    }

    #[test]
    fn q_table_layout() {
        let bundle = ReportBundle { groups: vec![group()], region_tests: vec![], warnings: vec![] };
        let text = q_table_csv(&bundle).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "virus,region,age_band,sex,n_months,Temp,AP,VP,Rain,Sun,Humidity,Wind");
        assert_eq!(lines[1], "RSV,north,all,all,20,0.100*,0.200†,0.300,0.400*,0.500†,0.600,NA");
    }

    #[test]
    fn interaction_matrix_layout() {
        let text = interaction_csv(&group()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[1], "Temp,0.100000,NA,NA,NA,NA,NA,NA");
        assert!(lines[7].ends_with(",NA"));
    }

    #[test]
    fn bundle_round_trips_through_json() {
        let bundle = ReportBundle { groups: vec![group()], region_tests: vec![], warnings: vec![] };
        let dir = tempfile::tempdir().unwrap();
        let written = write_tables(dir.path(), &bundle).unwrap();
        assert_eq!(written.len(), 5);
        let back = read_bundle(&dir.path().join("q_table.json")).unwrap();
        assert_eq!(back, bundle);
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
