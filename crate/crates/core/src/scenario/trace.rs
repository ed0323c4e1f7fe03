use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One logged control tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRecord {
    pub t: f64,
    pub phi_x: f64,
    pub phi_y: f64,
    pub phidot_x: f64,
    pub phidot_y: f64,
    pub phi_x_hat: f64,
    pub phi_y_hat: f64,
    pub phidot_x_hat: f64,
    pub phidot_y_hat: f64,
    pub n_x_hat: f64,
    pub n_y_hat: f64,
    /// Measured angles, NaN when the frame gave no measurement.
    pub y1: f64,
    pub y2: f64,
    pub sigma4_m1: f64,
    pub sigma4_m2: f64,
    pub tip_x: f64,
    pub tip_y: f64,
    pub tip_z: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub w_x: f64,
    pub w_y: f64,
    pub vdot_x: f64,
    pub vdot_y: f64,
    pub eta: f64,
    pub gamma: f64,
    pub length: f64,
    pub length_filtered: f64,
    pub damping_on: bool,
    pub estimate_frozen: bool,
    pub vision_valid: bool,
}

pub const COLUMNS: [&str; 33] = [
    "t",
    "phi_x",
    "phi_y",
    "phidot_x",
    "phidot_y",
    "phi_x_hat",
    "phi_y_hat",
    "phidot_x_hat",
    "phidot_y_hat",
    "n_x_hat",
    "n_y_hat",
    "y1",
    "y2",
    "sigma4_m1",
    "sigma4_m2",
    "tip_x",
    "tip_y",
    "tip_z",
    "ref_x",
    "ref_y",
    "v_x",
    "v_y",
    "w_x",
    "w_y",
    "vdot_x",
    "vdot_y",
    "eta",
    "gamma",
    "length",
    "length_filtered",
    "damping_on",
    "estimate_frozen",
    "vision_valid",
];

impl TraceRecord {
    fn values(&self) -> [f64; 30] {
        [
            self.t,
            self.phi_x,
            self.phi_y,
            self.phidot_x,
            self.phidot_y,
            self.phi_x_hat,
            self.phi_y_hat,
            self.phidot_x_hat,
            self.phidot_y_hat,
            self.n_x_hat,
            self.n_y_hat,
            self.y1,
            self.y2,
            self.sigma4_m1,
            self.sigma4_m2,
            self.tip_x,
            self.tip_y,
            self.tip_z,
            self.ref_x,
            self.ref_y,
            self.v_x,
            self.v_y,
            self.w_x,
            self.w_y,
            self.vdot_x,
            self.vdot_y,
            self.eta,
            self.gamma,
            self.length,
            self.length_filtered,
        ]
    }

    fn from_fields(f: &[f64; 30], flags: [bool; 3]) -> Self {
        Self {
            t: f[0],
            phi_x: f[1],
            phi_y: f[2],
            phidot_x: f[3],
            phidot_y: f[4],
            phi_x_hat: f[5],
            phi_y_hat: f[6],
            phidot_x_hat: f[7],
            phidot_y_hat: f[8],
            n_x_hat: f[9],
            n_y_hat: f[10],
            y1: f[11],
            y2: f[12],
            sigma4_m1: f[13],
            sigma4_m2: f[14],
            tip_x: f[15],
            tip_y: f[16],
            tip_z: f[17],
            ref_x: f[18],
            ref_y: f[19],
            v_x: f[20],
            v_y: f[21],
            w_x: f[22],
            w_y: f[23],
            vdot_x: f[24],
            vdot_y: f[25],
            eta: f[26],
            gamma: f[27],
            length: f[28],
            length_filtered: f[29],
            damping_on: flags[0],
            estimate_frozen: flags[1],
            vision_valid: flags[2],
        }
    }
}

/// Run identification written into the CSV header.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub scenario_id: String,
    pub seed: u64,
    /// True cable length of the simulated payload [m].
    pub true_length: f64,
    /// Diagnostic of an aborted run.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

fn format_value(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("nan");
    } else {
        // 9 significant digits
        let _ = write!(out, "{v:.8e}");
    }
}

pub fn write_csv<W: Write>(trace: &Trace, mut out: W) -> std::io::Result<()> {
    let m = &trace.meta;
    writeln!(out, "# schema={SCHEMA_VERSION}")?;
    let mut meta = format!("# scenario={} seed={} true_length={}", m.scenario_id, m.seed, m.true_length);
    if let Some(reason) = &m.aborted {
        let _ = write!(meta, " aborted={}", reason.replace(char::is_whitespace, "_"));
    }
    writeln!(out, "{meta}")?;
    writeln!(out, "{}", COLUMNS.join(","))?;
    let mut line = String::new();
    for r in &trace.records {
        line.clear();
        for (k, v) in r.values().iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            format_value(&mut line, *v);
        }
        for flag in [r.damping_on, r.estimate_frozen, r.vision_valid] {
            line.push_str(if flag { ",1" } else { ",0" });
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

fn parse_error(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("trace line {line}: {msg}"))
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Trace> {
    let mut lines = input.lines().enumerate();
    let mut next_line = || -> Result<(usize, String)> {
        let (n, line) = lines.next().ok_or_else(|| parse_error(0, "unexpected end of file"))?;
        line.map(|l| (n + 1, l)).map_err(|e| parse_error(n + 1, e))
    };
    let (n, schema) = next_line()?;
    if schema.trim() != format!("# schema={SCHEMA_VERSION}") {
        return Err(parse_error(n, format!("unsupported schema header {schema:?}")));
    }
    let (n, meta_line) = next_line()?;
    let mut meta = TraceMeta {
        scenario_id: String::new(),
        seed: 0,
        true_length: f64::NAN,
        aborted: None,
    };
    for kv in meta_line.trim_start_matches('#').split_whitespace() {
        let (key, value) = kv.split_once('=').ok_or_else(|| parse_error(n, "malformed metadata"))?;
        match key {
            "scenario" => meta.scenario_id = value.to_string(),
            "seed" => meta.seed = value.parse().map_err(|e| parse_error(n, e))?,
            "true_length" => meta.true_length = value.parse().map_err(|e| parse_error(n, e))?,
            "aborted" => meta.aborted = Some(value.to_string()),
            _ => {}
        }
    }
    let (n, header) = next_line()?;
    if header.trim() != COLUMNS.join(",") {
        return Err(parse_error(n, "column header does not match the schema"));
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| parse_error(n + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != COLUMNS.len() {
            return Err(parse_error(n + 1, format!("expected {} columns, found {}", COLUMNS.len(), cells.len())));
        }
        let mut fields = [0.0; 30];
        for (f, cell) in fields.iter_mut().zip(&cells) {
            *f = cell.trim().parse().map_err(|e| parse_error(n + 1, e))?;
        }
        let flag = |s: &str| match s.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(parse_error(n + 1, format!("bad flag {other:?}"))),
        };
        let flags = [flag(cells[30])?, flag(cells[31])?, flag(cells[32])?];
        records.push(TraceRecord::from_fields(&fields, flags));
    }
    Ok(Trace { meta, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let mut r = TraceRecord {
            t: 0.05,
            phi_x: 0.123456789123,
            y1: f64::NAN,
            length_filtered: 0.5,
            damping_on: true,
            ..TraceRecord::default()
        };
        r.gamma = 100.0;
        Trace {
            meta: TraceMeta {
                scenario_id: "case-1".into(),
                seed: 42,
                true_length: 1.05,
                aborted: None,
            },
            records: vec![TraceRecord::default(), r],
        }
    }

    #[test]
    fn round_trip_keeps_nine_digits() {
        let mut buf = Vec::new();
        write_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema=1\n"));
        assert!(text.contains("1.23456789e-1"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.meta, sample().meta);
        assert_eq!(back.records.len(), 2);
        assert!(back.records[1].y1.is_nan());
        assert_eq!(back.records[1].phi_x, 0.123456789);
        assert!(back.records[1].damping_on && !back.records[1].vision_valid);
    }

    #[test]
    fn column_count_matches_record() {
        assert_eq!(TraceRecord::default().values().len() + 3, COLUMNS.len());
    }

    #[test]
    fn rejects_unknown_schema() {
        assert!(read_csv("# schema=2\n".as_bytes()).is_err());
    }
}
