//! Delimited-text import and export of measurement rows.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::Direction;
use crate::radio::{GlobalBeamId, MeasurementRow, DATASET_COLUMNS};

pub fn write_rows<W: Write>(rows: &[MeasurementRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DATASET_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.frame.to_string(),
            r.crnti.to_string(),
            r.current_beam.0.to_string(),
            r.previous_beam.0.to_string(),
            r.beam_rsrp_dbm.to_string(),
            r.beam_sinr_db.to_string(),
            r.ue_direction.code().to_string(),
            r.ue_speed_mps.to_string(),
            r.ue_x_m.to_string(),
            r.ue_y_m.to_string(),
            u8::from(r.rlf).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {line}: bad {}", DATASET_COLUMNS[i])))
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<MeasurementRow>> {
    let mut input = csv::Reader::from_reader(r);
    if input.headers()?.iter().ne(DATASET_COLUMNS) {
        return Err(Error::Parse(format!("dataset header must be {}", DATASET_COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for rec in input.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let code: u8 = field(&rec, 6, line)?;
        let rlf: u8 = field(&rec, 10, line)?;
        if rlf > 1 {
            return Err(Error::Parse(format!("line {line}: rlf must be 0 or 1")));
        }
        rows.push(MeasurementRow {
            frame: field(&rec, 0, line)?,
            crnti: field(&rec, 1, line)?,
            current_beam: GlobalBeamId(field(&rec, 2, line)?),
            previous_beam: GlobalBeamId(field(&rec, 3, line)?),
            beam_rsrp_dbm: field(&rec, 4, line)?,
            beam_sinr_db: field(&rec, 5, line)?,
            ue_direction: Direction::from_code(code)
                .ok_or_else(|| Error::Parse(format!("line {line}: direction code {code}")))?,
            ue_speed_mps: field(&rec, 7, line)?,
            ue_x_m: field(&rec, 8, line)?,
            ue_y_m: field(&rec, 9, line)?,
            rlf: rlf == 1,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(frame: u32, crnti: u32) -> MeasurementRow {
        MeasurementRow {
            frame,
            crnti,
            current_beam: GlobalBeamId(17),
            previous_beam: GlobalBeamId(9),
            beam_rsrp_dbm: -47.123456789012345,
            beam_sinr_db: 0.1 + 0.2,
            ue_direction: Direction::W,
            ue_speed_mps: 27.77777777777778,
            ue_x_m: 1e-7,
            ue_y_m: 399.99999999999994,
            rlf: frame % 2 == 1,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let rows: Vec<_> = (0..10).flat_map(|f| [row(f, 1), row(f, 2)]).collect();
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert_eq!(text.lines().next().unwrap(), DATASET_COLUMNS.join(","));
        assert!(text.lines().skip(1).all(|l| l.ends_with(",0") || l.ends_with(",1")));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_rows(&b"frame,crnti\n1,2\n"[..]).is_err());
        let mut buf = Vec::new();
        write_rows(&[row(0, 1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",0\n", ",2\n");
        assert!(matches!(read_rows(text.as_bytes()), Err(Error::Parse(_))));
    }
}
