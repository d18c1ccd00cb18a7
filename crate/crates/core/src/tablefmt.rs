//! Plain-text serialization for context-by-outcome tables.
//!
//! Format: a header line `contexts=<n> outcomes=<m>` followed by one
//! whitespace-separated row per context. Values are written with 17
//! significant digits so the round trip is bit-stable for f64.

use crate::error::{Error, Result};

pub(crate) fn write_table(num_contexts: usize, num_outcomes: usize, values: &[f64]) -> String {
    let mut out = format!("contexts={num_contexts} outcomes={num_outcomes}\n");
    for row in values.chunks(num_outcomes) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub(crate) fn parse_table(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty table file".into()))?;
    let mut contexts = None;
    let mut outcomes = None;
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("contexts=") {
            contexts = Some(
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad contexts count '{v}'")))?,
            );
        } else if let Some(v) = tok.strip_prefix("outcomes=") {
            outcomes = Some(
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad outcomes count '{v}'")))?,
            );
        } else {
            return Err(Error::Parse(format!("unexpected header token '{tok}'")));
        }
    }
    let (nc, no) = match (contexts, outcomes) {
        (Some(c), Some(o)) => (c, o),
        _ => return Err(Error::Parse("header must carry contexts= and outcomes=".into())),
    };
    let mut values = Vec::with_capacity(nc * no);
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad value '{t}' in row {i}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != no {
            return Err(Error::Parse(format!(
                "row {i} has {} values, expected {no}",
                row.len()
            )));
        }
        values.extend(row);
    }
    if values.len() != nc * no {
        return Err(Error::Parse(format!(
            "expected {nc} rows, found {}",
            values.len() / no
        )));
    }
    Ok((nc, no, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_stable() {
        let values = vec![
            1.0,
            -0.333333333333333314829616256247390992939472198486328125,
            1e-300,
            std::f64::consts::PI,
            -2.5e17,
            0.1,
        ];
        let text = write_table(3, 2, &values);
        let (nc, no, back) = parse_table(&text).unwrap();
        assert_eq!((nc, no), (3, 2));
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let twice = write_table(nc, no, &back);
        assert_eq!(text, twice);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(parse_table("contexts=2 outcomes=2\n1 2 3\n4 5 6\n").is_err());
        assert!(parse_table("contexts=2 outcomes=3\n1 2 3\n").is_err());
        assert!(parse_table("outcomes=3\n1 2 3\n").is_err());
    }
}
