//! Implicit-feedback labelling and k-core filtering.

use std::collections::{HashMap, VecDeque};

use super::{DataError, InteractionEvent};

/// Repeat-listen threshold used for every dataset.
pub const DEFAULT_THRESHOLD: u32 = 2;
/// Minimum distinct interactions per user and per item.
pub const DEFAULT_CORE: usize = 5;

/// One distinct user–item pair with its event count and binary label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledPair {
    pub user: u32,
    pub item: u32,
    pub count: u32,
    pub label: bool,
}

impl LabeledPair {
    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Collapses events into one pair per (user, item), labelled positive when
/// the pair was played at least `threshold` times. Output is sorted by
/// `(user, item)`.
pub fn binarize(events: &[InteractionEvent], threshold: u32) -> Result<Vec<LabeledPair>, DataError> {
    if threshold == 0 {
        return Err(DataError::InvalidArgument("threshold must be >= 1".into()));
    }
    let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
    for e in events {
        *counts.entry((e.user, e.item)).or_insert(0) += 1;
    }
    let mut pairs: Vec<LabeledPair> = counts
        .into_iter()
        .map(|((user, item), count)| LabeledPair {
            user,
            item,
            count,
            label: count >= threshold,
        })
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Iteratively drops users and items with fewer than `k` distinct pairs
/// until every survivor has at least `k`. Input order is preserved.
pub fn k_core_filter(pairs: &[LabeledPair], k: usize) -> Result<Vec<LabeledPair>, DataError> {
    if k == 0 {
        return Err(DataError::InvalidArgument("k must be >= 1".into()));
    }
    let mut user_pairs: HashMap<u32, Vec<usize>> = HashMap::new();
    let mut item_pairs: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, p) in pairs.iter().enumerate() {
        user_pairs.entry(p.user).or_default().push(i);
        item_pairs.entry(p.item).or_default().push(i);
    }
    let mut user_deg: HashMap<u32, usize> = user_pairs.iter().map(|(&u, v)| (u, v.len())).collect();
    let mut item_deg: HashMap<u32, usize> = item_pairs.iter().map(|(&i, v)| (i, v.len())).collect();
    let mut alive = vec![true; pairs.len()];

    #[derive(Clone, Copy)]
    enum Node {
        User(u32),
        Item(u32),
    }
    let mut queue: VecDeque<Node> = VecDeque::new();
    let mut users: Vec<u32> = user_deg.iter().filter(|(_, &d)| d < k).map(|(&u, _)| u).collect();
    users.sort_unstable();
    queue.extend(users.into_iter().map(Node::User));
    let mut items: Vec<u32> = item_deg.iter().filter(|(_, &d)| d < k).map(|(&i, _)| i).collect();
    items.sort_unstable();
    queue.extend(items.into_iter().map(Node::Item));

    while let Some(node) = queue.pop_front() {
        let incident = match node {
            Node::User(u) => &user_pairs[&u],
            Node::Item(i) => &item_pairs[&i],
        };
        for &pi in incident {
            if !alive[pi] {
                continue;
            }
            alive[pi] = false;
            let p = pairs[pi];
            let du = user_deg.get_mut(&p.user).expect("user indexed");
            *du -= 1;
            if *du + 1 == k {
                queue.push_back(Node::User(p.user));
            }
            let di = item_deg.get_mut(&p.item).expect("item indexed");
            *di -= 1;
            if *di + 1 == k {
                queue.push_back(Node::Item(p.item));
            }
        }
    }
    Ok(pairs
        .iter()
        .zip(alive)
        .filter_map(|(p, a)| a.then_some(*p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(user: u32, item: u32) -> InteractionEvent {
        InteractionEvent { user, item, timestamp: 0 }
    }

    fn pair(user: u32, item: u32) -> LabeledPair {
        LabeledPair { user, item, count: 1, label: false }
    }

    #[test]
    fn threshold_two_labels() {
        let events = [ev(0, 0), ev(0, 0), ev(0, 0), ev(0, 1), ev(1, 0), ev(1, 0)];
        let pairs = binarize(&events, 2).unwrap();
        let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![true, false, true]);
        assert_eq!(pairs[0].count, 3);
    }

    #[test]
    fn threshold_one_marks_everything_positive() {
        let events = [ev(0, 0), ev(0, 1), ev(2, 1)];
        assert!(binarize(&events, 1).unwrap().iter().all(|p| p.label));
    }

    #[test]
    fn repeated_events_collapse_to_one_pair() {
        let events = [ev(3, 4); 5];
        let pairs = binarize(&events, 2).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].count, 5);
    }

    #[test]
    fn star_graph_vanishes_under_five_core() {
        let star: Vec<LabeledPair> = (0..5).map(|i| pair(0, i)).collect();
        assert!(k_core_filter(&star, 5).unwrap().is_empty());
    }

    #[test]
    fn complete_bipartite_survives() {
        let full: Vec<LabeledPair> = (0..5).flat_map(|u| (0..5).map(move |i| pair(u, i))).collect();
        assert_eq!(k_core_filter(&full, 5).unwrap(), full);
    }

    #[test]
    fn one_core_is_identity() {
        let pairs = vec![pair(0, 0), pair(1, 3), pair(2, 3)];
        assert_eq!(k_core_filter(&pairs, 1).unwrap(), pairs);
    }

    #[test]
    fn zero_arguments_rejected() {
        assert!(binarize(&[], 0).is_err());
        assert!(k_core_filter(&[], 0).is_err());
        assert!(binarize(&[], 2).unwrap().is_empty());
    }
}
