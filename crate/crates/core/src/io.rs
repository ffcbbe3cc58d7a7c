//! CSV ingestion and export.
//!
//! Input: `ra,dec,imageID,starNo` rows, one observation per line, with an
//! optional header (detected by the first line failing to parse as numbers).
//! Output: catalog rows `catalog_id,ra,dec` and assignment rows
//! `catalog_id,image_id,star_no`. Writers sort their rows and print
//! coordinates with 10 decimal digits so identical inputs always produce
//! byte-identical files.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::sphere::SphericalPoint;

/// One sky detection: position plus the (imageID, starNo) provenance key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub pos: SphericalPoint,
    pub image_id: i64,
    pub star_no: i64,
}

/// One catalog entry: minted identifier plus the cluster center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogRecord {
    pub catalog_id: i64,
    pub pos: SphericalPoint,
}

/// Mapping of one observation to its catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssignmentRecord {
    pub catalog_id: i64,
    pub image_id: i64,
    pub star_no: i64,
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("malformed row at line {0}")]
    MalformedRow(u64),
    #[error("coordinate out of range at line {0}")]
    InvalidCoordinate(u64),
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

enum ParsedRow {
    Record(ObservationRecord),
    BadNumber,
    BadCoordinate,
}

fn parse_row(line: &str) -> ParsedRow {
    let mut fields = line.split(',');
    let mut next = || fields.next().map(str::trim);
    let (Some(ra), Some(dec), Some(image), Some(star)) = (next(), next(), next(), next())
    else {
        return ParsedRow::BadNumber;
    };
    if fields.next().is_some() {
        return ParsedRow::BadNumber;
    }
    let (Ok(ra), Ok(dec), Ok(image_id), Ok(star_no)) = (
        ra.parse::<f64>(),
        dec.parse::<f64>(),
        image.parse::<i64>(),
        star.parse::<i64>(),
    ) else {
        return ParsedRow::BadNumber;
    };
    match SphericalPoint::new(ra, dec) {
        Ok(pos) => ParsedRow::Record(ObservationRecord { pos, image_id, star_no }),
        Err(_) => ParsedRow::BadCoordinate,
    }
}

/// Read all observations from a CSV stream, in file order.
pub fn read_observations<R: BufRead>(reader: R) -> Result<Vec<ObservationRecord>, ReadError> {
    let mut records = Vec::new();
    let mut line_no = 0u64;
    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(&line) {
            ParsedRow::Record(rec) => records.push(rec),
            // a first line that is not numeric is taken as the header
            ParsedRow::BadNumber if line_no == 1 => continue,
            ParsedRow::BadNumber => return Err(ReadError::MalformedRow(line_no)),
            ParsedRow::BadCoordinate => return Err(ReadError::InvalidCoordinate(line_no)),
        }
    }
    Ok(records)
}

/// Write catalog rows sorted by catalog id. 10 decimal digits keep
/// sub-microarcsecond precision, enough to regenerate identifiers from the
/// file alone.
pub fn write_catalog<W: Write>(writer: &mut W, records: &mut [CatalogRecord]) -> std::io::Result<()> {
    records.sort_by(|a, b| {
        (a.catalog_id, a.pos.ra_deg(), a.pos.dec_deg())
            .partial_cmp(&(b.catalog_id, b.pos.ra_deg(), b.pos.dec_deg()))
            .expect("coordinates are finite")
    });
    for r in records {
        writeln!(
            writer,
            "{},{:.10},{:.10}",
            r.catalog_id,
            r.pos.ra_deg(),
            r.pos.dec_deg()
        )?;
    }
    Ok(())
}

/// Write assignment rows sorted by (catalog_id, image_id, star_no).
pub fn write_assignments<W: Write>(
    writer: &mut W,
    records: &mut [AssignmentRecord],
) -> std::io::Result<()> {
    records.sort_by_key(|r| (r.catalog_id, r.image_id, r.star_no));
    for r in records {
        writeln!(writer, "{},{},{}", r.catalog_id, r.image_id, r.star_no)?;
    }
    Ok(())
}

/// Read catalog rows (`catalog_id,ra,dec`, optional header).
pub fn read_catalog<R: BufRead>(reader: R) -> Result<Vec<CatalogRecord>, ReadError> {
    let mut records = Vec::new();
    let mut line_no = 0u64;
    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let parsed = (|| {
            let id = fields.next()?.parse::<i64>().ok()?;
            let ra = fields.next()?.parse::<f64>().ok()?;
            let dec = fields.next()?.parse::<f64>().ok()?;
            Some((id, ra, dec))
        })();
        match parsed {
            Some((catalog_id, ra, dec)) => match SphericalPoint::new(ra, dec) {
                Ok(pos) => records.push(CatalogRecord { catalog_id, pos }),
                Err(_) => return Err(ReadError::InvalidCoordinate(line_no)),
            },
            None if line_no == 1 => continue,
            None => return Err(ReadError::MalformedRow(line_no)),
        }
    }
    Ok(records)
}

/// Read assignment rows (`catalog_id,image_id,star_no`, optional header).
pub fn read_assignments<R: BufRead>(reader: R) -> Result<Vec<AssignmentRecord>, ReadError> {
    let mut records = Vec::new();
    let mut line_no = 0u64;
    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let parsed = (|| {
            let id = fields.next()?.parse::<i64>().ok()?;
            let image = fields.next()?.parse::<i64>().ok()?;
            let star = fields.next()?.parse::<i64>().ok()?;
            Some(AssignmentRecord { catalog_id: id, image_id: image, star_no: star })
        })();
        match parsed {
            Some(rec) => records.push(rec),
            None if line_no == 1 => continue,
            None => return Err(ReadError::MalformedRow(line_no)),
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(ra: f64, dec: f64, image: i64, star: i64) -> ObservationRecord {
        ObservationRecord {
            pos: SphericalPoint::new(ra, dec).unwrap(),
            image_id: image,
            star_no: star,
        }
    }

    #[test]
    fn single_row() {
        let recs = read_observations("10.5,-72.1,42,7\n".as_bytes()).unwrap();
        assert_eq!(recs, vec![obs(10.5, -72.1, 42, 7)]);
    }

    #[test]
    fn header_is_skipped() {
        let recs = read_observations("ra,dec,imageID,starNo\n0,0,1,1\n".as_bytes()).unwrap();
        assert_eq!(recs, vec![obs(0.0, 0.0, 1, 1)]);
    }

    #[test]
    fn out_of_range_dec_is_invalid_coordinate() {
        let err = read_observations("10.5,-95.0,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ReadError::InvalidCoordinate(1)));
    }

    #[test]
    fn malformed_second_row_aborts() {
        let err = read_observations("0,0,1,1\n0,zero,2,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ReadError::MalformedRow(2)));
        let err = read_observations("0,0,1,1\n1,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ReadError::MalformedRow(2)));
    }

    #[test]
    fn catalog_formatting() {
        let mut out = Vec::new();
        let mut recs = vec![CatalogRecord {
            catalog_id: 99,
            pos: SphericalPoint::new(10.0, -70.0).unwrap(),
        }];
        write_catalog(&mut out, &mut recs).unwrap();
        assert_eq!(out, b"99,10.0000000000,-70.0000000000\n");

        let mut out = Vec::new();
        write_catalog(&mut out, &mut []).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn assignments_sorted() {
        let mut out = Vec::new();
        let mut recs = vec![
            AssignmentRecord { catalog_id: 5, image_id: 9, star_no: 1 },
            AssignmentRecord { catalog_id: 5, image_id: 2, star_no: 3 },
        ];
        write_assignments(&mut out, &mut recs).unwrap();
        assert_eq!(out, b"5,2,3\n5,9,1\n");
    }

    #[test]
    fn roundtrip_random_records() {
        let mut state = 31u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state
        };
        let mut rows = String::new();
        let mut expected = Vec::new();
        for i in 0..10_000 {
            let ra = (next() % 3_600_000) as f64 / 10_000.0;
            let dec = (next() % 1_800_000) as f64 / 10_000.0 - 90.0;
            rows.push_str(&format!("{ra},{dec},{},{i}\n", next() % 1000));
        }
        let recs = read_observations(rows.as_bytes()).unwrap();
        assert_eq!(recs.len(), 10_000);
        // write as catalog rows and read back: identity at 10 decimals
        let mut cat: Vec<CatalogRecord> = recs
            .iter()
            .enumerate()
            .map(|(i, r)| CatalogRecord { catalog_id: i as i64, pos: r.pos })
            .collect();
        expected.extend(cat.iter().copied());
        let mut buf = Vec::new();
        write_catalog(&mut buf, &mut cat).unwrap();
        let back = read_catalog(buf.as_slice()).unwrap();
        assert_eq!(back.len(), expected.len());
        for (a, b) in back.iter().zip(expected.iter()) {
            assert_eq!(a.catalog_id, b.catalog_id);
            assert!((a.pos.ra_deg() - b.pos.ra_deg()).abs() < 1e-9);
            assert!((a.pos.dec_deg() - b.pos.dec_deg()).abs() < 1e-9);
        }
        // writers are deterministic
        let mut buf2 = Vec::new();
        let mut cat2: Vec<CatalogRecord> = back.clone();
        write_catalog(&mut buf2, &mut cat2).unwrap();
        let mut buf3 = Vec::new();
        let mut cat3: Vec<CatalogRecord> = back;
        write_catalog(&mut buf3, &mut cat3).unwrap();
        assert_eq!(buf2, buf3);
    }
}
