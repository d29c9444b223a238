//! Touchstone v1 `.s2p` and plain-CSV readers and writers.
//!
//! Two-port data rows carry nine numbers: frequency followed by the pairs
//! for S11, S21, S12, S22 in that order. Pairs are real/imaginary (`RI`),
//! magnitude/angle (`MA`) or dB/angle (`DB`), angles in degrees. Internally
//! every value is complex rectangular and every frequency is in Hz.

use std::fmt::{self, Write as _};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::response::{FrequencyResponse, ResponseError, SParams, DB_FLOOR};

/// Header of the CSV alternative format.
pub const CSV_HEADER: [&str; 9] = [
    "freq_hz", "s11_re", "s11_im", "s21_re", "s21_im", "s12_re", "s12_im", "s22_re", "s22_im",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FreqUnit {
    pub fn multiplier(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            FreqUnit::Hz => "Hz",
            FreqUnit::KHz => "kHz",
            FreqUnit::MHz => "MHz",
            FreqUnit::GHz => "GHz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameter {
    S,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// real, imaginary
    Ri,
    /// linear magnitude, angle in degrees
    Ma,
    /// 20·log10 magnitude, angle in degrees
    Db,
}

impl DataFormat {
    fn keyword(self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }

    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::Ri => Complex64::new(a, b),
            DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (z.re, z.im),
            DataFormat::Ma => (z.norm(), z.arg().to_degrees()),
            DataFormat::Db => {
                let mag = z.norm();
                let db = if mag == 0.0 { DB_FLOOR } else { 20.0 * mag.log10() };
                (db, z.arg().to_degrees())
            }
        }
    }
}

/// Contents of a `#` option line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionLine {
    pub freq_unit: FreqUnit,
    pub parameter: Parameter,
    pub format: DataFormat,
    pub resistance: f64,
}

impl Default for OptionLine {
    /// `# GHz S MA R 50`
    fn default() -> Self {
        Self {
            freq_unit: FreqUnit::GHz,
            parameter: Parameter::S,
            format: DataFormat::Ma,
            resistance: 50.0,
        }
    }
}

impl OptionLine {
    pub fn new(freq_unit: FreqUnit, format: DataFormat) -> Self {
        Self {
            freq_unit,
            format,
            ..Self::default()
        }
    }

    /// Parses the text of an option line, with or without the leading `#`.
    /// Fields that are not given keep their default values.
    pub fn parse(line: &str) -> Result<Self, String> {
        let body = line.trim_start().strip_prefix('#').unwrap_or(line);
        let mut opts = Self::default();
        let mut tokens = body.split_whitespace();
        while let Some(tok) = tokens.next() {
            match tok.to_ascii_uppercase().as_str() {
                "HZ" => opts.freq_unit = FreqUnit::Hz,
                "KHZ" => opts.freq_unit = FreqUnit::KHz,
                "MHZ" => opts.freq_unit = FreqUnit::MHz,
                "GHZ" => opts.freq_unit = FreqUnit::GHz,
                "S" => opts.parameter = Parameter::S,
                "Y" => opts.parameter = Parameter::Y,
                "Z" => opts.parameter = Parameter::Z,
                "RI" => opts.format = DataFormat::Ri,
                "MA" => opts.format = DataFormat::Ma,
                "DB" => opts.format = DataFormat::Db,
                "R" => {
                    let value = tokens
                        .next()
                        .ok_or_else(|| "`R` must be followed by a resistance".to_string())?;
                    let r: f64 = value
                        .parse()
                        .map_err(|_| format!("invalid reference resistance `{value}`"))?;
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(format!("reference resistance must be positive, got {r}"));
                    }
                    opts.resistance = r;
                }
                _ => return Err(format!("unrecognised token `{tok}`")),
            }
        }
        Ok(opts)
    }
}

impl fmt::Display for OptionLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let param = match self.parameter {
            Parameter::S => "S",
            Parameter::Y => "Y",
            Parameter::Z => "Z",
        };
        write!(
            f,
            "# {} {} {} R {}",
            self.freq_unit.keyword(),
            param,
            self.format.keyword(),
            self.resistance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: malformed option line: {reason}")]
    OptionLine { line: usize, reason: String },
    #[error("line {line}: only S-parameter files are supported")]
    UnsupportedParameter { line: usize },
    #[error("line {line}: Touchstone v2 keyword `{keyword}` is not supported")]
    UnsupportedVersion { line: usize, keyword: String },
    #[error("line {line}: expected 9 columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid number `{token}`")]
    InvalidNumber { line: usize, token: String },
    #[error("line {line}: frequency {freq_hz} Hz is not above the previous row")]
    NonMonotonic { line: usize, freq_hz: f64 },
    #[error("line {line}: frequency {freq_hz} Hz must be positive")]
    NonPositiveFrequency { line: usize, freq_hz: f64 },
    #[error("line {line}: option line after data rows")]
    LateOptionLine { line: usize },
    #[error("line {line}: CSV header must be `{expected}`")]
    CsvHeader { line: usize, expected: String },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Response(#[from] ResponseError),
}

impl ParseError {
    /// 1-based source line, when the error has one.
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::OptionLine { line, .. }
            | ParseError::UnsupportedParameter { line }
            | ParseError::UnsupportedVersion { line, .. }
            | ParseError::ColumnCount { line, .. }
            | ParseError::InvalidNumber { line, .. }
            | ParseError::NonMonotonic { line, .. }
            | ParseError::NonPositiveFrequency { line, .. }
            | ParseError::LateOptionLine { line }
            | ParseError::CsvHeader { line, .. }
            | ParseError::Csv { line, .. } => Some(*line),
            ParseError::Response(_) => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
}

fn parse_number(token: &str, line: usize) -> Result<f64, ParseError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ParseError::InvalidNumber {
            line,
            token: token.to_string(),
        })
}

/// Parses a Touchstone v1 two-port document.
///
/// Without an option line the defaults `# GHz S MA R 50` apply. Only the
/// first option line counts; later ones before any data are ignored.
pub fn parse_touchstone(text: &str) -> Result<FrequencyResponse, ParseError> {
    let mut opts: Option<OptionLine> = None;
    let mut freqs = Vec::new();
    let mut s = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            let keyword = content
                .split(']')
                .next()
                .map(|k| format!("{k}]"))
                .unwrap_or_default();
            return Err(ParseError::UnsupportedVersion { line, keyword });
        }
        if content.starts_with('#') {
            if !freqs.is_empty() {
                return Err(ParseError::LateOptionLine { line });
            }
            if opts.is_none() {
                let parsed =
                    OptionLine::parse(content).map_err(|reason| ParseError::OptionLine { line, reason })?;
                if parsed.parameter != Parameter::S {
                    return Err(ParseError::UnsupportedParameter { line });
                }
                opts = Some(parsed);
            }
            continue;
        }

        let o = *opts.get_or_insert_with(OptionLine::default);
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 9 {
            return Err(ParseError::ColumnCount {
                line,
                found: tokens.len(),
            });
        }
        let mut v = [0.0; 9];
        for (slot, tok) in v.iter_mut().zip(&tokens) {
            *slot = parse_number(tok, line)?;
        }
        let freq_hz = v[0] * o.freq_unit.multiplier();
        if freq_hz <= 0.0 {
            return Err(ParseError::NonPositiveFrequency { line, freq_hz });
        }
        if freqs.last().is_some_and(|&prev| freq_hz <= prev) {
            return Err(ParseError::NonMonotonic { line, freq_hz });
        }
        let pair = |k: usize| o.format.decode(v[1 + 2 * k], v[2 + 2 * k]);
        // column order S11, S21, S12, S22
        s.push(SParams::new(pair(0), pair(2), pair(1), pair(3)));
        freqs.push(freq_hz);
    }

    let z0 = opts.unwrap_or_default().resistance;
    Ok(FrequencyResponse::new(freqs, s, z0)?)
}

/// Writes a Touchstone v1 document using the unit and data format of
/// `opts`. The option line always declares S-parameters and the reference
/// resistance of `resp`; values are not renormalised.
pub fn write_touchstone(resp: &FrequencyResponse, opts: &OptionLine) -> String {
    let header = OptionLine {
        parameter: Parameter::S,
        resistance: resp.z0(),
        ..*opts
    };
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    let unit = opts.freq_unit.multiplier();
    for (f, sp) in resp.freqs().iter().zip(resp.s()) {
        let _ = write!(out, "{}", f / unit);
        for z in [sp.s11, sp.s21, sp.s12, sp.s22] {
            let (a, b) = opts.format.encode(z);
            let _ = write!(out, " {a:.12e} {b:.12e}");
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV alternative format. Lines starting with `#` are comments.
pub fn parse_csv(text: &str, z0: f64) -> Result<FrequencyResponse, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header_line = text
        .lines()
        .position(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map_or(1, |p| p + 1);
    let headers = reader.headers().map_err(|e| csv_error(&e, header_line))?;
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ParseError::CsvHeader {
            line: header_line,
            expected: CSV_HEADER.join(","),
        });
    }

    let mut freqs = Vec::new();
    let mut s = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 9 {
            return Err(ParseError::ColumnCount {
                line,
                found: record.len(),
            });
        }
        let mut v = [0.0; 9];
        for (slot, tok) in v.iter_mut().zip(record.iter()) {
            *slot = parse_number(tok, line)?;
        }
        if v[0] <= 0.0 {
            return Err(ParseError::NonPositiveFrequency { line, freq_hz: v[0] });
        }
        if freqs.last().is_some_and(|&prev| v[0] <= prev) {
            return Err(ParseError::NonMonotonic { line, freq_hz: v[0] });
        }
        let c = |k: usize| Complex64::new(v[1 + 2 * k], v[2 + 2 * k]);
        s.push(SParams::new(c(0), c(2), c(1), c(3)));
        freqs.push(v[0]);
    }
    Ok(FrequencyResponse::new(freqs, s, z0)?)
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> ParseError {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::UnequalLengths { len, .. } => ParseError::ColumnCount {
            line,
            found: *len as usize,
        },
        _ => ParseError::Csv {
            line,
            message: e.to_string(),
        },
    }
}

pub fn write_csv(resp: &FrequencyResponse) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for (f, sp) in resp.freqs().iter().zip(resp.s()) {
        let _ = write!(out, "{f}");
        for z in [sp.s11, sp.s21, sp.s12, sp.s22] {
            let _ = write!(out, ",{:.12e},{:.12e}", z.re, z.im);
        }
        out.push('\n');
    }
    out
}

/// Reads a response from disk, choosing CSV for `.csv` files and Touchstone
/// otherwise. CSV files assume a 50 ohm reference.
pub fn read_response(path: &Path) -> Result<FrequencyResponse, IoError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: name.clone(),
        source,
    })?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let parsed = if is_csv {
        parse_csv(&text, 50.0)
    } else {
        parse_touchstone(&text)
    };
    parsed.map_err(|source| IoError::Parse { path: name, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn option_line_ri_ghz() {
        let o = OptionLine::parse("# GHz S RI R 50").unwrap();
        assert_eq!(o.freq_unit.multiplier(), 1e9);
        assert_eq!(o.format, DataFormat::Ri);
        assert_eq!(o.resistance, 50.0);
    }

    #[test]
    fn option_line_case_and_order_insensitive() {
        let o = OptionLine::parse("#r 75 db mhz").unwrap();
        assert_eq!(o.freq_unit, FreqUnit::MHz);
        assert_eq!(o.format, DataFormat::Db);
        assert_eq!(o.resistance, 75.0);
        assert_eq!(o.parameter, Parameter::S);
    }

    #[test]
    fn identity_row_ri() {
        let r = parse_touchstone("# GHz S RI R 50\n1.0 0 0 1 0 1 0 0 0\n").unwrap();
        assert_eq!(r.freqs(), &[1e9]);
        let s = r.s()[0];
        assert_eq!(s.s11, c(0.0, 0.0));
        assert_eq!(s.s21, c(1.0, 0.0));
        assert_eq!(s.s12, c(1.0, 0.0));
        assert_eq!(s.s22, c(0.0, 0.0));
    }

    #[test]
    fn column_order_is_s11_s21_s12_s22() {
        let r = parse_touchstone("# Hz S RI R 50\n10 1 0 2 0 3 0 4 0\n").unwrap();
        let s = r.s()[0];
        assert_eq!((s.s11.re, s.s21.re, s.s12.re, s.s22.re), (1.0, 2.0, 3.0, 4.0));
    }

    #[test]
    fn defaults_without_option_line() {
        // GHz, MA, 50 ohm
        let r = parse_touchstone("2 0.5 90 1 0 1 0 0.5 -90\n").unwrap();
        assert_eq!(r.freqs(), &[2e9]);
        assert_eq!(r.z0(), 50.0);
        let s11 = r.s()[0].s11;
        assert!(s11.re.abs() < 1e-15 && (s11.im - 0.5).abs() < 1e-15);
    }

    #[test]
    fn db_format_decodes() {
        let r = parse_touchstone("# MHz S DB R 50\n100 -20 180 0 0 0 0 -6 0\n").unwrap();
        assert_eq!(r.freqs(), &[1e8]);
        let s = r.s()[0];
        assert!((s.s11 - c(-0.1, 0.0)).norm() < 1e-15);
        assert!((s.s21 - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text =
            "! header\n\n# GHz S RI R 50 ! trailing\n! mid\n1 0 0 1 0 1 0 0 0 ! row\n\n2 0 0 1 0 1 0 0 0\n";
        let r = parse_touchstone(text).unwrap();
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases: &[(&str, usize)] = &[
            ("# GHz S RI R\n", 1),
            ("# GHz S FOO R 50\n", 1),
            ("! c\n# GHz Y RI R 50\n", 2),
            ("# GHz S RI R 50\n1 0 0 1 0 1 0 0\n", 2),
            ("# GHz S RI R 50\n2 0 0 1 0 1 0 0 0\n1 0 0 1 0 1 0 0 0\n", 3),
            ("# GHz S RI R 50\n1 0 0 x 0 1 0 0 0\n", 2),
            ("[Version] 2.0\n", 1),
            ("# GHz S RI R 50\n0 0 0 1 0 1 0 0 0\n", 2),
        ];
        for (text, line) in cases {
            let err = parse_touchstone(text).unwrap_err();
            assert_eq!(err.line(), Some(*line), "{text:?} -> {err}");
        }
    }

    #[test]
    fn distinct_error_kinds() {
        assert!(matches!(
            parse_touchstone("# GHz Z RI R 50\n"),
            Err(ParseError::UnsupportedParameter { .. })
        ));
        assert!(matches!(
            parse_touchstone("# GHz S RI R 50\n1 0 0\n"),
            Err(ParseError::ColumnCount { found: 3, .. })
        ));
        assert!(matches!(
            parse_touchstone("1 0 0 1 0 1 0 0 0\n1 0 0 1 0 1 0 0 0\n"),
            Err(ParseError::NonMonotonic { .. })
        ));
        assert!(matches!(
            parse_touchstone("# GHz S RI R -5\n"),
            Err(ParseError::OptionLine { .. })
        ));
        assert!(matches!(
            parse_touchstone("[Number of Ports] 2\n"),
            Err(ParseError::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn empty_response_writes_option_line_only() {
        let r = FrequencyResponse::empty(50.0).unwrap();
        let text = write_touchstone(&r, &OptionLine::new(FreqUnit::GHz, DataFormat::Ri));
        assert_eq!(text, "# GHz S RI R 50\n");
        assert!(parse_touchstone(&text).unwrap().is_empty());
    }

    #[test]
    fn zero_magnitude_uses_db_sentinel() {
        let r = FrequencyResponse::new(
            vec![1e9],
            vec![SParams::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))],
            50.0,
        )
        .unwrap();
        let text = write_touchstone(&r, &OptionLine::new(FreqUnit::GHz, DataFormat::Db));
        let row = text.lines().nth(1).unwrap();
        assert!(row.split_whitespace().nth(1).unwrap().starts_with("-4.0"));
        let back = parse_touchstone(&text).unwrap();
        assert!(back.s()[0].s11.norm() < 1e-19);
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let r = parse_touchstone("# GHz S RI R 50\n1 0.1 0.2 0.3 0.4 0.5 0.6 0.7 0.8\n").unwrap();
        let text = write_csv(&r);
        assert!(text.starts_with("freq_hz,s11_re,s11_im,s21_re"));
        let back = parse_csv(&text, 50.0).unwrap();
        assert_eq!(back, r);

        let bad = "freq,s11_re\n1,2\n";
        assert!(matches!(
            parse_csv(bad, 50.0),
            Err(ParseError::CsvHeader { line: 1, .. })
        ));
        let short = format!("{}\n1,0,0\n", CSV_HEADER.join(","));
        assert_eq!(parse_csv(&short, 50.0).unwrap_err().line(), Some(2));
    }
}
