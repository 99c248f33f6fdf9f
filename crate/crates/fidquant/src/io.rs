//! File formats: decay records as CSV with a JSON header line, species
//! tables and peak windows as JSON. Text throughout, with full-precision
//! float rendering so that write → read round trips are bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ft::PeakWindow;
use crate::model::{AcquisitionConfig, FidRecord};
use crate::species::{Species, SpeciesLine, SpeciesTable};

/// Bundled two-species table: 2-butanone and cyclohexane carbon-13 lines
/// with theoretical and calibrated intensity weights.
pub const BUNDLED_SPECIES_JSON: &str = include_str!("../data/butanone_cyclohexane.json");
/// Name accepted by file arguments to select [`BUNDLED_SPECIES_JSON`].
pub const BUNDLED_SPECIES_NAME: &str = "bundled";

const FID_FORMAT: &str = "fid";
const FID_VERSION: u32 = 1;
const FID_COLUMNS: &str = "t_s,y_real,y_imag";

#[derive(Debug, Serialize, Deserialize)]
struct FidHeader {
    format: String,
    version: u32,
    n_samples: usize,
    dt_s: f64,
    omega0_rad_s: f64,
    ref_freq_hz_per_ppm: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Serializes a decay record: one JSON header line, one column-name line,
/// then `t_s,y_real,y_imag` rows. Floats are rendered with the shortest
/// decimal form that parses back to the identical bits.
///
/// Both channels must share one time grid, since rows pair the channels.
pub fn write_fid(fid: &FidRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if fid.times_real != fid.times_imag {
        return Err(Error::invalid(
            "file format pairs the channels row-wise; both must share one time grid",
        ));
    }
    let header = FidHeader {
        format: FID_FORMAT.into(),
        version: FID_VERSION,
        n_samples: fid.n_real(),
        dt_s: fid.acq.dt_s,
        omega0_rad_s: fid.acq.omega0_rad_s,
        ref_freq_hz_per_ppm: fid.acq.ref_freq_hz_per_ppm,
    };
    let mut text = serde_json::to_string(&header)?;
    text.push('\n');
    text.push_str(FID_COLUMNS);
    text.push('\n');
    for ((t, y1), y2) in fid.times_real.iter().zip(&fid.y_real).zip(&fid.y_imag) {
        writeln!(text, "{t},{y1},{y2}").expect("string write cannot fail");
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a decay record written by [`write_fid`], reporting malformed
/// content with its line number. Times must be strictly increasing, values
/// finite, and the row count must match the header.
pub fn read_fid(path: impl AsRef<Path>) -> Result<FidRecord> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file; expected a JSON header line"))?;
    let header: FidHeader = serde_json::from_str(header_line)
        .map_err(|e| parse_err(path, 1, format!("bad header: {e}")))?;
    if header.format != FID_FORMAT || header.version != FID_VERSION {
        return Err(parse_err(
            path,
            1,
            format!(
                "unsupported format '{}' version {} (this reader handles '{FID_FORMAT}' \
                 version {FID_VERSION})",
                header.format, header.version
            ),
        ));
    }

    match lines.next() {
        Some((_, cols)) if cols.trim() == FID_COLUMNS => {}
        Some((_, cols)) => {
            return Err(parse_err(path, 2, format!("expected columns '{FID_COLUMNS}', got '{cols}'")))
        }
        None => return Err(parse_err(path, 2, "missing column-name line")),
    }

    let mut times = Vec::with_capacity(header.n_samples);
    let mut y_real = Vec::with_capacity(header.n_samples);
    let mut y_imag = Vec::with_capacity(header.n_samples);
    for (idx, row) in lines {
        let line_no = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        if times.len() == header.n_samples {
            return Err(parse_err(
                path,
                line_no,
                format!("more data rows than the {} declared in the header", header.n_samples),
            ));
        }
        let mut fields = row.split(',');
        let mut next_field = |what: &str| -> Result<f64> {
            let raw = fields
                .next()
                .ok_or_else(|| parse_err(path, line_no, format!("missing {what} column")))?;
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad {what} value '{raw}': {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite {what} value '{raw}'")));
            }
            Ok(v)
        };
        let t = next_field("time")?;
        let y1 = next_field("real-channel")?;
        let y2 = next_field("imaginary-channel")?;
        if fields.next().is_some() {
            return Err(parse_err(path, line_no, "more than 3 comma-separated columns"));
        }
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("times must be strictly increasing; {t} follows {prev}"),
                ));
            }
        }
        times.push(t);
        y_real.push(y1);
        y_imag.push(y2);
    }
    if times.len() != header.n_samples {
        return Err(parse_err(
            path,
            3 + times.len(),
            format!("expected {} data rows, found {}", header.n_samples, times.len()),
        ));
    }

    let acq = AcquisitionConfig {
        n_samples: header.n_samples,
        dt_s: header.dt_s,
        omega0_rad_s: header.omega0_rad_s,
        ref_freq_hz_per_ppm: header.ref_freq_hz_per_ppm,
    };
    FidRecord::new(acq, times.clone(), times, y_real, y_imag)
}

/// Which intensity-weight column of a species file to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightColumn {
    /// Nominal weights from line multiplicities.
    Theoretical,
    /// Weights calibrated on reference measurements.
    Calibrated,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WeightSpec {
    Single(f64),
    Columns { theoretical: f64, calibrated: f64 },
}

#[derive(Debug, Deserialize)]
struct LineSpec {
    ppm: f64,
    #[serde(rename = "B")]
    weight: WeightSpec,
}

#[derive(Debug, Deserialize)]
struct SpeciesSpec {
    name: String,
    lines: Vec<LineSpec>,
}

#[derive(Debug, Deserialize)]
struct SpeciesFile {
    species: Vec<SpeciesSpec>,
}

/// Parses species JSON: `{"species":[{"name":..,"lines":[{"ppm":..,"B":..}]}]}`
/// where `B` is either a single number or
/// `{"theoretical":..,"calibrated":..}`; `column` picks which weight to use.
pub fn parse_species_json(text: &str, column: WeightColumn) -> Result<SpeciesTable> {
    let file: SpeciesFile = serde_json::from_str(text)?;
    let species = file
        .species
        .into_iter()
        .map(|sp| Species {
            name: sp.name,
            lines: sp
                .lines
                .into_iter()
                .map(|l| SpeciesLine {
                    freq_ppm: l.ppm,
                    weight: match (l.weight, column) {
                        (WeightSpec::Single(w), _) => w,
                        (WeightSpec::Columns { theoretical, .. }, WeightColumn::Theoretical) => {
                            theoretical
                        }
                        (WeightSpec::Columns { calibrated, .. }, WeightColumn::Calibrated) => {
                            calibrated
                        }
                    },
                })
                .collect(),
        })
        .collect();
    SpeciesTable::new(species)
}

/// Reads a species table from a JSON file; the path `"bundled"` selects the
/// built-in 2-butanone/cyclohexane table.
pub fn read_species(path: impl AsRef<Path>, column: WeightColumn) -> Result<SpeciesTable> {
    let path = path.as_ref();
    if path.as_os_str() == BUNDLED_SPECIES_NAME {
        return parse_species_json(BUNDLED_SPECIES_JSON, column);
    }
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_species_json(&text, column)
        .map_err(|e| contextualize_json(e, path))
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowsFile {
    windows: Vec<PeakWindow>,
}

/// Reads integration windows from JSON: `{"windows":[{"species":..,
/// "line_index":..,"lo_ppm":..,"hi_ppm":..}]}`. Each window is validated.
pub fn read_windows(path: impl AsRef<Path>) -> Result<Vec<PeakWindow>> {
    let path = path.as_ref();
    let file: WindowsFile = read_json(path)?;
    for w in &file.windows {
        w.validate()?;
    }
    Ok(file.windows)
}

/// Writes integration windows as JSON in the shape [`read_windows`] reads.
pub fn write_windows(windows: &[PeakWindow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&WindowsFile { windows: windows.to_vec() })?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads any JSON-encoded value, attributing syntax errors to the file and
/// line.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| contextualize_json(Error::Json(e), path))
}

/// Serializes a value as pretty JSON to a file.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn contextualize_json(e: Error, path: &Path) -> Error {
    match e {
        Error::Json(je) => parse_err(path, je.line(), je.to_string()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_fid, NoiseModel, NuisanceParams};

    fn sample_fid() -> FidRecord {
        let acq = AcquisitionConfig {
            n_samples: 64,
            dt_s: 25e-6,
            omega0_rad_s: 0.0,
            ref_freq_hz_per_ppm: 75.0,
        };
        let table = parse_species_json(BUNDLED_SPECIES_JSON, WeightColumn::Theoretical).unwrap();
        let psi = NuisanceParams::at_table(&table, &acq, 0.3, 1e-4, 22.0);
        simulate_fid(&[0.3, 0.7], &psi, &NoiseModel::new(0.5).unwrap(), &table, &acq, 17).unwrap()
    }

    #[test]
    fn fid_round_trip_is_bit_exact() {
        let fid = sample_fid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fid.csv");
        write_fid(&fid, &path).unwrap();
        let back = read_fid(&path).unwrap();
        assert_eq!(back.acq, fid.acq);
        for (a, b) in [
            (&fid.times_real, &back.times_real),
            (&fid.y_real, &back.y_real),
            (&fid.y_imag, &back.y_imag),
        ] {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_reports_missing_rows() {
        let fid = sample_fid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fid.csv");
        write_fid(&fid, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let shorter: Vec<&str> = text.lines().take(2 + 40).collect();
        std::fs::write(&path, shorter.join("\n")).unwrap();
        let err = read_fid(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 64 data rows, found 40"), "{msg}");
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fid.csv");
        let header = r#"{"format":"fid","version":1,"n_samples":2,"dt_s":1.0,"omega0_rad_s":0.0,"ref_freq_hz_per_ppm":75.0}"#;

        for (bad_rows, needle) in [
            ("0,1,2\n0.5,NaN,2", "non-finite"),
            ("0,1,2\n0,3,4", "strictly increasing"),
            ("0,1,2\n1,2", "missing"),
            ("0,1,2\n1,2,3,4", "columns"),
            ("0,1,2\n1,x,3", "bad"),
        ] {
            std::fs::write(&path, format!("{header}\nt_s,y_real,y_imag\n{bad_rows}")).unwrap();
            let err = read_fid(&path).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(":4:"), "line number missing: {msg}");
            assert!(msg.contains(needle), "wanted '{needle}' in: {msg}");
        }

        std::fs::write(&path, "not json\nt_s,y_real,y_imag\n").unwrap();
        assert!(read_fid(&path).unwrap_err().to_string().contains(":1:"));
        std::fs::write(
            &path,
            format!("{}\nt_s,y_real,y_imag\n0,1,2\n1,1,2", header.replace("\"version\":1", "\"version\":9")),
        )
        .unwrap();
        assert!(read_fid(&path).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn bundled_table_matches_published_lines() {
        let theo = parse_species_json(BUNDLED_SPECIES_JSON, WeightColumn::Theoretical).unwrap();
        assert_eq!(theo.n_species(), 2);
        let butanone = &theo.species()[0];
        assert_eq!(butanone.name, "2-Butanone");
        let ppms: Vec<f64> = butanone.lines.iter().map(|l| l.freq_ppm).collect();
        assert_eq!(ppms, vec![209.29, 36.87, 29.43, 7.87]);
        assert!(butanone.lines.iter().all(|l| l.weight == 1.0));
        let cyclohexane = &theo.species()[1];
        assert_eq!(cyclohexane.name, "Cyclohexane");
        assert_eq!(cyclohexane.lines[0].freq_ppm, 27.1);
        assert_eq!(cyclohexane.lines[0].weight, 6.0);

        let cal = parse_species_json(BUNDLED_SPECIES_JSON, WeightColumn::Calibrated).unwrap();
        let weights: Vec<f64> = cal.species()[0].lines.iter().map(|l| l.weight).collect();
        assert_eq!(weights, vec![0.908, 0.967, 0.957, 0.93]);
        assert_eq!(cal.species()[1].lines[0].weight, 5.735);

        // The bundled name resolves without touching the filesystem.
        let via_path = read_species(BUNDLED_SPECIES_NAME, WeightColumn::Theoretical).unwrap();
        assert_eq!(via_path.n_species(), 2);
    }

    #[test]
    fn species_json_validation_errors_surface() {
        assert!(parse_species_json(r#"{"species":[]}"#, WeightColumn::Theoretical).is_err());
        let dup = r#"{"species":[
            {"name":"x","lines":[{"ppm":1.0,"B":1.0}]},
            {"name":"x","lines":[{"ppm":2.0,"B":1.0}]}]}"#;
        assert!(parse_species_json(dup, WeightColumn::Theoretical).is_err());
        let nonpos = r#"{"species":[{"name":"x","lines":[{"ppm":1.0,"B":0.0}]}]}"#;
        assert!(parse_species_json(nonpos, WeightColumn::Theoretical).is_err());
    }

    #[test]
    fn windows_round_trip_and_validate() {
        let windows = vec![
            PeakWindow { species: "a".into(), line_index: 0, lo_ppm: 1.0, hi_ppm: 2.0 },
            PeakWindow { species: "b".into(), line_index: 1, lo_ppm: -3.5, hi_ppm: -2.5 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("windows.json");
        write_windows(&windows, &path).unwrap();
        assert_eq!(read_windows(&path).unwrap(), windows);

        std::fs::write(
            &path,
            r#"{"windows":[{"species":"a","line_index":0,"lo_ppm":2.0,"hi_ppm":1.0}]}"#,
        )
        .unwrap();
        assert!(read_windows(&path).is_err());
    }
}
