use crate::error::{Error, Result};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use std::collections::BTreeMap;

/// `m` training instances per class; the remainder is split 1:9 into
/// validation and test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FewShotSplit {
    pub shots: usize,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Samples `m` ids per class from the labelled entries of `labels`, shuffles
/// the rest, and puts the first `max(1, round(rest/10))` into validation.
pub fn few_shot_split<R: Rng + ?Sized>(labels: &[Option<usize>], m: usize, rng: &mut R) -> Result<FewShotSplit> {
    if m == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (id, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            by_class.entry(*c).or_default().push(id);
        }
    }
    if by_class.is_empty() {
        return Err(Error::Empty("no labelled instances"));
    }
    let mut train_ids = Vec::with_capacity(m * by_class.len());
    let mut rest = Vec::new();
    for (class, ids) in &by_class {
        if ids.len() < m {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} labelled instances, fewer than {m} shots",
                ids.len()
            )));
        }
        let mut chosen = vec![false; ids.len()];
        for i in index::sample(rng, ids.len(), m) {
            chosen[i] = true;
            train_ids.push(ids[i]);
        }
        rest.extend(ids.iter().zip(&chosen).filter(|(_, &c)| !c).map(|(&id, _)| id));
    }
    rest.shuffle(rng);
    let n_val = ((rest.len() as f64 / 10.0).round() as usize).max(1).min(rest.len());
    let test_ids = rest.split_off(n_val);
    Ok(FewShotSplit {
        shots: m,
        train_ids,
        val_ids: rest,
        test_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn exact_one_to_nine() {
        let labels: Vec<_> = (0..104).map(|i| Some(i % 4)).collect();
        let s = few_shot_split(&labels, 1, &mut stream(0, "s")).unwrap();
        assert_eq!((s.train_ids.len(), s.val_ids.len(), s.test_ids.len()), (4, 10, 90));
    }

    #[test]
    fn small_remainder() {
        let labels: Vec<_> = [0, 0, 0, 1, 1, 1].into_iter().map(Some).collect();
        let s = few_shot_split(&labels, 1, &mut stream(0, "s")).unwrap();
        assert_eq!((s.train_ids.len(), s.val_ids.len(), s.test_ids.len()), (2, 1, 3));
    }

    #[test]
    fn too_few_instances_names_class() {
        let labels = vec![Some(0), Some(0), Some(1), None];
        let err = few_shot_split(&labels, 2, &mut stream(0, "s")).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn unlabelled_nodes_excluded() {
        let labels = vec![Some(0), None, Some(1), None, Some(0), Some(1)];
        let s = few_shot_split(&labels, 1, &mut stream(3, "s")).unwrap();
        let mut all: Vec<_> = s
            .train_ids
            .iter()
            .chain(&s.val_ids)
            .chain(&s.test_ids)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 2, 4, 5]);
    }
}
