//! Line-delimited wire protocol for out-of-process games.
//!
//! Over the subprocess's standard streams:
//!
//! 1. The subprocess announces itself with `HELLO d=<int>`.
//! 2. The host sends `EVAL <k>` followed by `k` lines, each the standard
//!    base64 of a little-endian bitmask of `⌈d/8⌉` bytes.
//! 3. The subprocess replies `VALUES <k>` followed by `k` lines of decimal
//!    floating point.
//! 4. The host terminates the session with `BYE`.
//!
//! [`serve`] implements the subprocess side for any [`Game`], which is also
//! how reference servers for integration testing are built.

use super::{Game, Subset};
use crate::error::{Error, Result};
use std::io::{BufRead, Write};

/// Terminator line sent by the host.
pub const BYE: &str = "BYE";

pub fn hello_line(d: usize) -> String {
    format!("HELLO d={d}")
}

/// Parses `HELLO d=<int>`; `line` is the 1-based protocol line number used in
/// error messages.
pub fn parse_hello(text: &str, line: usize) -> Result<usize> {
    let text = text.trim();
    text.strip_prefix("HELLO d=")
        .and_then(|rest| rest.parse::<usize>().ok())
        .filter(|&d| d >= 1)
        .ok_or_else(|| Error::Protocol {
            line,
            message: format!("expected 'HELLO d=<int>', found '{text}'"),
        })
}

pub fn eval_header(k: usize) -> String {
    format!("EVAL {k}")
}

pub fn parse_eval_header(text: &str, line: usize) -> Result<usize> {
    let text = text.trim();
    text.strip_prefix("EVAL ")
        .and_then(|rest| rest.parse::<usize>().ok())
        .ok_or_else(|| Error::Protocol {
            line,
            message: format!("expected 'EVAL <k>', found '{text}'"),
        })
}

pub fn values_header(k: usize) -> String {
    format!("VALUES {k}")
}

pub fn parse_values_header(text: &str, line: usize) -> Result<usize> {
    let text = text.trim();
    text.strip_prefix("VALUES ")
        .and_then(|rest| rest.parse::<usize>().ok())
        .ok_or_else(|| Error::Protocol {
            line,
            message: format!("expected 'VALUES <k>', found '{text}'"),
        })
}

pub fn parse_value(text: &str, line: usize) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|e| Error::Protocol {
        line,
        message: format!("bad value '{}': {e}", text.trim()),
    })
}

/// Runs the subprocess side of the protocol until `BYE` or end of input.
///
/// Values are written with Rust's shortest round-trip float formatting.
pub fn serve(game: &dyn Game, input: impl BufRead, mut output: impl Write) -> Result<()> {
    let d = game.d();
    writeln!(output, "{}", hello_line(d))?;
    output.flush()?;
    let mut lines = input.lines();
    let mut lineno = 0usize;
    loop {
        let header = match lines.next() {
            None => return Ok(()),
            Some(h) => h?,
        };
        lineno += 1;
        if header.trim() == BYE {
            return Ok(());
        }
        let k = parse_eval_header(&header, lineno)?;
        let mut batch = Vec::with_capacity(k);
        for _ in 0..k {
            let mask = lines.next().ok_or_else(|| Error::Protocol {
                line: lineno + 1,
                message: "input ended inside an EVAL block".into(),
            })??;
            lineno += 1;
            batch.push(Subset::from_base64(d, &mask).map_err(|e| Error::Protocol {
                line: lineno,
                message: e.to_string(),
            })?);
        }
        let values = game.evaluate_batch(&batch)?;
        writeln!(output, "{}", values_header(k))?;
        for v in values {
            writeln!(output, "{v}")?;
        }
        output.flush()?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::TabularGame;

    #[test]
    fn header_round_trips() {
        assert_eq!(parse_hello(&hello_line(12), 1).unwrap(), 12);
        assert_eq!(parse_eval_header(&eval_header(300), 2).unwrap(), 300);
        assert_eq!(parse_values_header(&values_header(7), 3).unwrap(), 7);
    }

    #[test]
    fn malformed_headers_name_the_line() {
        match parse_hello("HELLO", 1).unwrap_err() {
            Error::Protocol { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_hello("HELLO d=0", 1).is_err());
        assert!(parse_eval_header("EVAL x", 4).is_err());
        assert!(parse_values_header("VALS 3", 9).is_err());
        match parse_value("0.5.2", 11).unwrap_err() {
            Error::Protocol { line, .. } => assert_eq!(line, 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn serve_answers_requests_in_order() {
        let game = TabularGame::from_fn(3, |m| m as f64).unwrap();
        let masks: Vec<String> = [0b011u64, 0b100, 0b111]
            .iter()
            .map(|&m| Subset::from_mask64(3, m).to_base64())
            .collect();
        let input = format!("EVAL 3\n{}\n{}\n{}\nBYE\n", masks[0], masks[1], masks[2]);
        let mut output = Vec::new();
        serve(&game, input.as_bytes(), &mut output).unwrap();
        let text = String::from_utf8(output).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "HELLO d=3");
        assert_eq!(lines[1], "VALUES 3");
        assert_eq!(lines[2..5], ["3", "4", "7"]);
    }

    #[test]
    fn serve_rejects_truncated_requests() {
        let game = TabularGame::from_fn(2, |m| m as f64).unwrap();
        let input = "EVAL 2\nAQ==\n";
        let mut output = Vec::new();
        let err = serve(&game, input.as_bytes(), &mut output).unwrap_err();
        assert!(matches!(err, Error::Protocol { .. }));
    }

    #[test]
    fn serve_values_round_trip_exactly() {
        let game = TabularGame::from_fn(2, |m| (m as f64) / 3.0 + 1e-17).unwrap();
        let mask = Subset::from_mask64(2, 0b01).to_base64();
        let input = format!("EVAL 1\n{mask}\nBYE\n");
        let mut output = Vec::new();
        serve(&game, input.as_bytes(), &mut output).unwrap();
        let text = String::from_utf8(output).unwrap();
        let printed: f64 = text.lines().nth(2).unwrap().parse().unwrap();
        assert_eq!(printed, game.value(1));
    }
}
