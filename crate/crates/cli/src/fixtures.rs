//! Published tables shipped with the binary. Set `PERMSENSE_FIXTURE_DIR` to
//! read them from a directory instead.

use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub const FIXTURE_DIR_ENV: &str = "PERMSENSE_FIXTURE_DIR";

const EMBEDDED: [(&str, &str); 5] = [
    ("table2.csv", include_str!("../fixtures/table2.csv")),
    ("table3.csv", include_str!("../fixtures/table3.csv")),
    ("table4.csv", include_str!("../fixtures/table4.csv")),
    ("table5.csv", include_str!("../fixtures/table5.csv")),
    ("table6.csv", include_str!("../fixtures/table6.csv")),
];

fn load(name: &str) -> Result<String> {
    if let Some(dir) = std::env::var_os(FIXTURE_DIR_ENV) {
        let path = PathBuf::from(dir).join(name);
        return std::fs::read_to_string(&path).with_context(|| format!("reading fixture {}", path.display()));
    }
    EMBEDDED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| text.to_string())
        .with_context(|| format!("no embedded fixture `{name}`"))
}

fn rows<T: DeserializeOwned>(name: &str) -> Result<Vec<T>> {
    let text = load(name)?;
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing fixture {name}"))
}

#[derive(Debug, Deserialize)]
pub struct Table3Row {
    pub permittivity: f64,
    pub s21_ghz: f64,
}

#[derive(Debug, Deserialize)]
pub struct Table4Row {
    pub permittivity: f64,
    pub s21_peak_ghz: f64,
    pub s11_peak_ghz: f64,
}

#[derive(Debug, Deserialize)]
pub struct Table5Row {
    #[serde(rename = "mut")]
    pub mut_name: String,
    pub permittivity: f64,
    pub simulated_peak_ghz: f64,
    pub calculated_peak_ghz: String,
}

#[derive(Debug, Deserialize)]
pub struct Table6Row {
    pub permittivity: f64,
    pub relative_error: String,
    #[serde(rename = "mut")]
    pub mut_name: String,
}

pub fn table3() -> Result<Vec<Table3Row>> {
    rows("table3.csv")
}

pub fn table4() -> Result<Vec<Table4Row>> {
    rows("table4.csv")
}

pub fn table5() -> Result<Vec<Table5Row>> {
    rows("table5.csv")
}

pub fn table6() -> Result<Vec<Table6Row>> {
    rows("table6.csv")
}
