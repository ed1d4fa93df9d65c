use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seeded_rng;

/// Stratified fold partition: each class is shuffled and dealt round-robin,
/// the second class continuing where the first stopped so overall sizes
/// differ by at most one. Each fold's indices are sorted.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::ClassTooSmall {
                class,
                count: idx.len(),
                parts: format!("{folds} folds"),
            });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.iter().enumerate() {
            out[(offset + pos) % folds].push(*i);
        }
        offset = (offset + idx.len()) % folds;
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Indices outside fold `held`, sorted.
pub fn complement(folds: &[Vec<usize>], held: usize) -> Vec<usize> {
    let mut train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != held)
        .flat_map(|(_, idx)| idx.iter().copied())
        .collect();
    train.sort_unstable();
    train
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_into_ten() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 5 == 0)).collect();
        let folds = stratified_folds(&labels, 10, 3).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.len() == 10));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.iter().filter(|&&i| labels[i] == 1).count() == 2));
    }

    #[test]
    fn too_small() {
        let labels = [0, 0, 0, 1];
        assert!(matches!(stratified_folds(&labels, 2, 1), Err(Error::ClassTooSmall { class: 1, .. })));
    }

    #[test]
    fn complement_excludes_held() {
        let folds = vec![vec![0, 3], vec![1], vec![2, 4]];
        assert_eq!(complement(&folds, 0), vec![1, 2, 4]);
    }
}
