//! Result files.
//!
//! CSV files start with `# key: value` metadata lines, followed by a header
//! row and one row per trial in the fixed column order of [`ROW_COLUMNS`].
//! Floats are written with 17 significant digits, so reading a file back
//! reproduces every value exactly. JSON files hold the same metadata, rows
//! and aggregates; non-finite floats are written as the strings `"inf"`,
//! `"-inf"` and `"NaN"`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sweep::{AggregateRow, SweepOutput};
use super::trial::{Axis, RunResult};
use crate::error::{Error, Result};

pub const ROW_COLUMNS: [&str; 14] = [
    "axis_index",
    "trial",
    "snr_db",
    "cbr",
    "n_s",
    "k",
    "k_o",
    "mse_coarse",
    "mse_refined",
    "psnr_coarse",
    "psnr_refined",
    "frechet_gauss",
    "prompt_ok",
    "error",
];

pub const AGGREGATE_COLUMNS: [&str; 16] = [
    "axis_index",
    "snr_db",
    "cbr",
    "n_s",
    "k",
    "trials",
    "failures",
    "k_o_mean",
    "mse_coarse_mean",
    "mse_coarse_std",
    "mse_refined_mean",
    "mse_refined_std",
    "psnr_coarse_mean",
    "psnr_refined_mean",
    "frechet_gauss",
    "prompt_success",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Ordered metadata entries written ahead of the results.
pub type Metadata = Vec<(String, String)>;

/// Configuration, seeds and modelling choices that shaped a result file.
pub fn metadata(cfg: &ExperimentConfig, axis: Axis, trials: usize) -> Result<Metadata> {
    let config_json =
        serde_json::to_string(cfg).map_err(|e| Error::Parse(format!("config serialization: {e}")))?;
    let pairs = [
        ("format", "gencomm-results v1".to_string()),
        ("spec_version", cfg.spec_version.to_string()),
        ("seed", cfg.seed.to_string()),
        ("axis", axis.name().to_string()),
        ("trials", trials.to_string()),
        ("predictor", format!("{:?}", cfg.predictor).to_lowercase()),
        ("stream", "chacha20(seed) stream (axis_index << 32 | trial)".to_string()),
        ("source_coder", "adaptive order-0 arithmetic coding, increment 32, halving at 2^16".to_string()),
        ("frame_check", "crc-32 0xedb88320 over length||payload".to_string()),
        ("channel_code", format!("regular (3,6) ldpc rate 1/2 n={}", cfg.side_channel.code_length)),
        ("side_modulation", "bpsk on i and q, 2 coded bits per channel use".to_string()),
        (
            "side_snr",
            match cfg.side_channel.snr_db {
                Some(s) => format!("{s} db"),
                None => "image-channel snr".to_string(),
            },
        ),
        ("k_o_in_cbr", "false".to_string()),
        ("prompt_loss", "unconditional sampling (null token)".to_string()),
        ("ns_lookup", "nearest table entry, ties to larger n_s, clamped".to_string()),
        ("unconditional_branch", "keeps z_c, drops only the prompt".to_string()),
        ("frechet_gauss", "raw latents, refined vs clean, jitter 1e-8 if rank deficient".to_string()),
        ("psnr", format!("latent mse, peak {}", cfg.metrics.psnr_peak)),
        ("wall_time", "omitted from result files".to_string()),
        ("config", config_json),
    ];
    Ok(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

fn write_meta<W: Write>(meta: &Metadata, w: &mut W) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {}", v.replace('\n', " "))?;
    }
    Ok(())
}

pub fn write_rows_csv<W: Write>(rows: &[RunResult], meta: &Metadata, mut w: W) -> Result<()> {
    write_meta(meta, &mut w)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ROW_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.axis_index.to_string(),
            r.trial.to_string(),
            fmt_f64(r.snr_db),
            fmt_f64(r.cbr),
            r.n_s.to_string(),
            r.k.to_string(),
            r.k_o.to_string(),
            fmt_f64(r.mse_coarse),
            fmt_f64(r.mse_refined),
            fmt_f64(r.psnr_coarse),
            fmt_f64(r.psnr_refined),
            r.frechet_gauss.map(fmt_f64).unwrap_or_default(),
            r.prompt_ok.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(aggs: &[AggregateRow], meta: &Metadata, mut w: W) -> Result<()> {
    write_meta(meta, &mut w)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AGGREGATE_COLUMNS).map_err(csv_err)?;
    for a in aggs {
        out.write_record([
            a.axis_index.to_string(),
            fmt_f64(a.snr_db),
            fmt_f64(a.cbr),
            a.n_s.to_string(),
            a.k.to_string(),
            a.trials.to_string(),
            a.failures.to_string(),
            fmt_f64(a.k_o_mean),
            fmt_f64(a.mse_coarse_mean),
            fmt_f64(a.mse_coarse_std),
            fmt_f64(a.mse_refined_mean),
            fmt_f64(a.mse_refined_std),
            fmt_f64(a.psnr_coarse_mean),
            fmt_f64(a.psnr_refined_mean),
            a.frechet_gauss.map(fmt_f64).unwrap_or_default(),
            fmt_f64(a.prompt_success),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Serialized form of a JSON result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub metadata: BTreeMap<String, String>,
    pub rows: Vec<RunResult>,
    pub aggregates: Vec<AggregateRow>,
}

pub fn write_json<W: Write>(
    rows: &[RunResult],
    aggs: &[AggregateRow],
    meta: &Metadata,
    mut w: W,
) -> Result<()> {
    let file = ResultsFile {
        metadata: meta.iter().cloned().collect(),
        rows: rows.to_vec(),
        aggregates: aggs.to_vec(),
    };
    serde_json::to_writer_pretty(&mut w, &file).map_err(|e| Error::Io(e.into()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Path of the aggregate file written next to a CSV result file.
pub fn aggregate_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.agg.csv"))
}

/// Writes a sweep to `path`. CSV output also writes the aggregates to
/// [`aggregate_path`]; JSON output holds both in one file.
pub fn write_results(out: &SweepOutput, meta: &Metadata, path: &Path, format: OutputFormat) -> Result<()> {
    let create = |p: &Path| -> Result<std::io::BufWriter<std::fs::File>> {
        Ok(std::io::BufWriter::new(std::fs::File::create(p)?))
    };
    match format {
        OutputFormat::Csv => {
            write_rows_csv(&out.rows, meta, create(path)?)?;
            write_aggregates_csv(&out.aggregates, meta, create(&aggregate_path(path))?)
        }
        OutputFormat::Json => write_json(&out.rows, &out.aggregates, meta, create(path)?),
    }
}

fn parse<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("column {name}: cannot parse {field:?}")))
}

/// Reads rows written by [`write_rows_csv`]; metadata lines are skipped.
pub fn read_rows_csv<R: Read>(r: R) -> Result<Vec<RunResult>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(ROW_COLUMNS.iter().copied()) {
        return Err(Error::Parse("unexpected result columns".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| &rec[i];
        rows.push(RunResult {
            axis_index: parse(f(0), ROW_COLUMNS[0])?,
            trial: parse(f(1), ROW_COLUMNS[1])?,
            snr_db: parse(f(2), ROW_COLUMNS[2])?,
            cbr: parse(f(3), ROW_COLUMNS[3])?,
            n_s: parse(f(4), ROW_COLUMNS[4])?,
            k: parse(f(5), ROW_COLUMNS[5])?,
            k_o: parse(f(6), ROW_COLUMNS[6])?,
            mse_coarse: parse(f(7), ROW_COLUMNS[7])?,
            mse_refined: parse(f(8), ROW_COLUMNS[8])?,
            psnr_coarse: parse(f(9), ROW_COLUMNS[9])?,
            psnr_refined: parse(f(10), ROW_COLUMNS[10])?,
            frechet_gauss: if f(11).is_empty() { None } else { Some(parse(f(11), ROW_COLUMNS[11])?) },
            prompt_ok: parse(f(12), ROW_COLUMNS[12])?,
            error: if f(13).is_empty() { None } else { Some(f(13).to_string()) },
            wall_time: 0.0,
        });
    }
    Ok(rows)
}

pub fn read_json<R: Read>(r: R) -> Result<ResultsFile> {
    serde_json::from_reader(r).map_err(|e| Error::Parse(format!("results: {e}")))
}

/// Serde adapter writing non-finite floats as strings.
pub mod float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("invalid float {t:?}"))),
        }
    }
}

/// [`float_repr`] for optional values.
pub mod opt_float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::float_repr::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::float_repr")] f64);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u32) -> RunResult {
        RunResult {
            axis_index: 0,
            trial: i,
            snr_db: 10.0,
            cbr: 2.0 / 768.0,
            n_s: 600,
            k: 2,
            k_o: 128,
            mse_coarse: 0.1 + i as f64 / 3.0,
            mse_refined: 0.0,
            psnr_coarse: 7.123456789012345,
            psnr_refined: f64::INFINITY,
            frechet_gauss: if i == 0 { None } else { Some(1.0 / 7.0) },
            prompt_ok: i % 2 == 0,
            error: if i == 2 { Some("trial 2: domain error, \"x\"".into()) } else { None },
            wall_time: 0.0,
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let rows: Vec<RunResult> = (0..3).map(row).collect();
        let meta = vec![("seed".to_string(), "7".to_string())];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &meta, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed: 7\naxis_index,trial,snr_db,"));
        assert_eq!(read_rows_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn empty_results_give_header_only() {
        let mut buf = Vec::new();
        write_rows_csv(&[], &Vec::new(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ROW_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn json_roundtrip_with_non_finite_values() {
        let rows: Vec<RunResult> = (0..3).map(row).collect();
        let meta = vec![("axis".to_string(), "snr".to_string())];
        let mut buf = Vec::new();
        write_json(&rows, &[], &meta, &mut buf).unwrap();
        let back = read_json(&buf[..]).unwrap();
        assert_eq!(back.rows, rows);
        assert_eq!(back.metadata["axis"], "snr");
    }

    #[test]
    fn aggregate_path_naming() {
        assert_eq!(aggregate_path(Path::new("/tmp/r.csv")), PathBuf::from("/tmp/r.agg.csv"));
    }
}
