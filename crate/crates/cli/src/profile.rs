use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use expertrec_core::ratings::{parse_movielens, RatingMatrix};
use expertrec_core::ExpertModel;

use crate::CliError;

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_ratings(path: &Path, r_max: u8) -> Result<RatingMatrix, CliError> {
    parse_movielens(open(path)?, r_max).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn item_index(model: &ExpertModel) -> HashMap<u32, usize> {
    model
        .experts
        .item_ids()
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect()
}

/// `item,rating` lines (also `::` or tab separated) as a dense vector over
/// the model's items. Unknown items are reported and skipped.
pub fn read_profile(path: &Path, model: &ExpertModel) -> Result<Vec<u8>, CliError> {
    let index = item_index(model);
    let r_max = model.experts.r_max();
    let mut out = vec![0u8; model.num_items()];
    let mut skipped = 0;
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || CliError::Config(format!("{}:{}: expected item,rating", path.display(), n + 1));
        let mut parts = line.split(|c| c == ',' || c == '\t' || c == ':').filter(|s| !s.is_empty());
        let item: u32 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        let rating: u8 = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        if rating == 0 || rating > r_max {
            return Err(CliError::Config(format!(
                "{}:{}: rating {rating} outside 1..={r_max}",
                path.display(),
                n + 1
            )));
        }
        match index.get(&item) {
            Some(&j) => out[j] = rating,
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        eprintln!("note: {skipped} profile items unknown to the model were ignored");
    }
    Ok(out)
}

/// One user's row of `data`, laid out over the model's items.
pub fn user_row(data: &RatingMatrix, user_id: u32, model: &ExpertModel) -> Result<Vec<u8>, CliError> {
    let u = data
        .user_ids()
        .iter()
        .position(|&id| id == user_id)
        .ok_or_else(|| CliError::Config(format!("user {user_id} not in ratings file")))?;
    let index = item_index(model);
    let mut out = vec![0u8; model.num_items()];
    for r in data.user_ratings(u as u32) {
        if let Some(&j) = index.get(&data.item_ids()[r.item as usize]) {
            out[j] = r.value;
        }
    }
    Ok(out)
}

/// Re-indexes `data` onto the model's items, dropping unknown items.
pub fn align(data: &RatingMatrix, model: &ExpertModel) -> Result<RatingMatrix, CliError> {
    let index = item_index(model);
    let entries: Vec<(u32, u32, u8)> = data
        .entries()
        .iter()
        .filter_map(|r| {
            index
                .get(&data.item_ids()[r.item as usize])
                .map(|&j| (r.user, j as u32, r.value))
        })
        .collect();
    RatingMatrix::with_ids(
        data.user_ids().to_vec(),
        model.experts.item_ids().to_vec(),
        data.r_max().max(model.experts.r_max()),
        entries,
    )
    .map_err(|e| CliError::Config(e.to_string()))
}
