use std::io::Write;
use std::path::Path;

use crate::env::TerminalCause;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "run,episode,return,steps,decisions,interventions,terminal";

/// One row of the results log. `episode` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub run: usize,
    pub episode: usize,
    /// Undiscounted environment return, rounded to 6 significant digits.
    pub ret: f64,
    pub steps: u64,
    pub decisions: u64,
    /// Advice or teacher interventions so far in this run.
    pub interventions: u64,
    pub terminal: TerminalCause,
}

/// `printf("%.6g")`.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..6).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to the value `format_g6` prints.
pub fn round_sig6(x: f64) -> f64 {
    format_g6(x).parse().unwrap_or(x)
}

pub fn records_to_csv(records: &[EpisodeRecord]) -> String {
    let mut out = String::with_capacity(40 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.run,
            r.episode,
            format_g6(r.ret),
            r.steps,
            r.decisions,
            r.interventions,
            r.terminal
        ));
    }
    out
}

fn field<T: std::str::FromStr>(line: usize, name: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Csv(format!("line {line}: invalid {name} '{value}'")))
}

pub fn parse_csv(text: &str) -> Result<Vec<EpisodeRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(Error::Csv(format!("missing header '{CSV_HEADER}'"))),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Csv(format!("line {lineno}: expected 7 columns, got {}", cols.len())));
        }
        records.push(EpisodeRecord {
            run: field(lineno, "run", cols[0])?,
            episode: field(lineno, "episode", cols[1])?,
            ret: field(lineno, "return", cols[2])?,
            steps: field(lineno, "steps", cols[3])?,
            decisions: field(lineno, "decisions", cols[4])?,
            interventions: field(lineno, "interventions", cols[5])?,
            terminal: cols[6]
                .parse()
                .map_err(|e: String| Error::Csv(format!("line {lineno}: {e}")))?,
        });
    }
    Ok(records)
}

pub fn write_csv(path: impl AsRef<Path>, records: &[EpisodeRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(records_to_csv(records).as_bytes())?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g6_matches_printf() {
        // Expected strings are what C's printf("%.6g") prints.
        let cases = [
            (65.0, "65"),
            (94.6, "94.6"),
            (94.60000000000001, "94.6"),
            (-500.0, "-500"),
            (-50.0, "-50"),
            (1234567.0, "1.23457e+06"),
            (123456.4, "123456"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-0.1, "-0.1"),
            (1.0 / 3.0, "0.333333"),
            (999999.5, "1e+06"),
            (0.0, "0"),
        ];
        for (x, s) in cases {
            assert_eq!(format_g6(x), s, "{x}");
        }
    }

    fn terminal() -> impl Strategy<Value = TerminalCause> {
        prop_oneof![
            Just(TerminalCause::Goal),
            Just(TerminalCause::Fell),
            Just(TerminalCause::Timeout)
        ]
    }

    proptest! {
        #[test]
        fn csv_round_trips(rows in prop::collection::vec(
            (0usize..20, 1usize..3000, -1e4f64..1e4, 0u64..5000, 0u64..5000, 0u64..10_000, terminal()),
            0..40,
        )) {
            let records: Vec<EpisodeRecord> = rows
                .into_iter()
                .map(|(run, episode, ret, steps, decisions, interventions, terminal)| EpisodeRecord {
                    run, episode, ret: round_sig6(ret), steps, decisions, interventions, terminal,
                })
                .collect();
            let text = records_to_csv(&records);
            prop_assert!(!text.contains('\r'));
            prop_assert_eq!(parse_csv(&text).unwrap(), records);
        }

        #[test]
        fn rounding_is_idempotent(x in -1e7f64..1e7) {
            let r = round_sig6(x);
            prop_assert_eq!(round_sig6(r), r);
            prop_assert!((r - x).abs() <= 5e-6 * x.abs() + 1e-300);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n0,1,2,3\n")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n0,1,x,3,4,5,goal\n")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n0,1,2,3,4,5,lost\n")).is_err());
        assert_eq!(parse_csv(&format!("{CSV_HEADER}\n")).unwrap(), vec![]);
    }
}
