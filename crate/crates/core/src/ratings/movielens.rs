use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{RatingMatrix, RatingsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delimiter {
    DoubleColon,
    Tab,
}

impl Delimiter {
    fn detect(line: &str) -> Option<Self> {
        if line.contains("::") {
            Some(Self::DoubleColon)
        } else if line.contains('\t') {
            Some(Self::Tab)
        } else {
            None
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Self::DoubleColon => line.split("::").collect(),
            Self::Tab => line.split('\t').collect(),
        }
    }
}

/// Reads `user::item::rating::timestamp` (1M) or tab-separated (100k)
/// lines. The format is fixed by the first non-blank line. Internal indices
/// are assigned in order of first appearance.
pub fn parse_movielens<R: BufRead>(reader: R, r_max: u8) -> Result<RatingMatrix, RatingsError> {
    let mut delimiter = None;
    let mut user_index: HashMap<u32, u32> = HashMap::new();
    let mut item_index: HashMap<u32, u32> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
    let mut triples = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let delim = match delimiter {
            Some(d) => d,
            None => {
                let d = Delimiter::detect(line).ok_or_else(|| RatingsError::Malformed {
                    line: line_no,
                    reason: "no '::' or tab delimiter".into(),
                })?;
                delimiter = Some(d);
                d
            }
        };
        let fields = delim.split(line);
        if fields.len() < 3 || fields.len() > 4 {
            return Err(RatingsError::Malformed {
                line: line_no,
                reason: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        let parse_id = |s: &str, what: &str| {
            s.trim().parse::<u32>().map_err(|_| RatingsError::Malformed {
                line: line_no,
                reason: format!("bad {what} '{s}'"),
            })
        };
        let uid = parse_id(fields[0], "user id")?;
        let iid = parse_id(fields[1], "item id")?;
        let rating: i64 = fields[2].trim().parse().map_err(|_| RatingsError::Malformed {
            line: line_no,
            reason: format!("bad rating '{}'", fields[2]),
        })?;
        if rating < 1 || rating > r_max as i64 {
            return Err(RatingsError::OutOfRange {
                line: line_no,
                rating,
                r_max,
            });
        }
        if let Some(ts) = fields.get(3) {
            parse_id(ts, "timestamp")?;
        }
        if seen.insert((uid, iid), line_no).is_some() {
            return Err(RatingsError::Duplicate {
                line: line_no,
                user: uid,
                item: iid,
            });
        }
        let u = *user_index.entry(uid).or_insert_with(|| {
            user_ids.push(uid);
            user_ids.len() as u32 - 1
        });
        let j = *item_index.entry(iid).or_insert_with(|| {
            item_ids.push(iid);
            item_ids.len() as u32 - 1
        });
        triples.push((u, j, rating as u8));
    }
    if triples.is_empty() {
        return Err(RatingsError::Empty);
    }
    RatingMatrix::with_ids(user_ids, item_ids, r_max, triples)
}

/// Writes the matrix in the `::` format with original ids. Timestamps are
/// not retained, so they are written as 0.
pub fn write_movielens<W: Write>(matrix: &RatingMatrix, mut out: W) -> std::io::Result<()> {
    for r in matrix.entries() {
        writeln!(
            out,
            "{}::{}::{}::0",
            matrix.user_ids()[r.user as usize],
            matrix.item_ids()[r.item as usize],
            r.value
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<RatingMatrix, RatingsError> {
        parse_movielens(s.as_bytes(), 5)
    }

    #[test]
    fn single_line_1m() {
        let m = parse("1::1193::5::978300760\n").unwrap();
        assert_eq!((m.num_users(), m.num_items()), (1, 1));
        assert_eq!(m.get(0, 0), Some(5));
        assert_eq!(m.user_ids(), &[1]);
        assert_eq!(m.item_ids(), &[1193]);
    }

    #[test]
    fn tab_format() {
        let m = parse("196\t242\t3\t881250949\n186\t302\t3\t891717742\n196\t302\t4\t1\n").unwrap();
        assert_eq!((m.num_users(), m.num_items(), m.len()), (2, 2, 3));
        assert_eq!(m.get(0, 1), Some(4));
    }

    #[test]
    fn empty_stream() {
        let err = parse("").unwrap_err();
        assert_eq!(err.to_string(), "no ratings");
        assert!(matches!(parse("\n\n"), Err(RatingsError::Empty)));
    }

    #[test]
    fn duplicate_pair() {
        let err = parse("1::10::3::0\n2::10::4::0\n1::10::5::0\n").unwrap_err();
        assert!(matches!(err, RatingsError::Duplicate { line: 3, user: 1, item: 10 }));
        assert!(err.to_string().contains("duplicate rating"));
    }

    #[test]
    fn malformed_names_line() {
        let err = parse("1::10::3::0\n1::x::3::0\n").unwrap_err();
        assert!(matches!(err, RatingsError::Malformed { line: 2, .. }));
        let err = parse("1::10::3::0\n1::11\n").unwrap_err();
        assert!(matches!(err, RatingsError::Malformed { line: 2, .. }));
    }

    #[test]
    fn rating_out_of_range() {
        assert!(matches!(
            parse("1::10::6::0\n"),
            Err(RatingsError::OutOfRange { line: 1, rating: 6, .. })
        ));
        assert!(matches!(
            parse("1::10::0::0\n"),
            Err(RatingsError::OutOfRange { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn write_then_parse_preserves_entries(
            cells in proptest::collection::btree_map((1u32..40, 1u32..60), 1u8..=5, 1..80)
        ) {
            let text: String = cells
                .iter()
                .map(|(&(u, i), &r)| format!("{u}::{i}::{r}::0\n"))
                .collect();
            let m = parse(&text).unwrap();
            let mut buf = Vec::new();
            write_movielens(&m, &mut buf).unwrap();
            let again = parse_movielens(buf.as_slice(), 5).unwrap();
            let collect = |m: &RatingMatrix| {
                let mut v: Vec<_> = m
                    .entries()
                    .iter()
                    .map(|r| (m.user_ids()[r.user as usize], m.item_ids()[r.item as usize], r.value))
                    .collect();
                v.sort();
                v
            };
            prop_assert_eq!(collect(&m), collect(&again));
            let expected: Vec<_> = cells.iter().map(|(&(u, i), &r)| (u, i, r)).collect();
            prop_assert_eq!(collect(&m), expected);
        }
    }
}
