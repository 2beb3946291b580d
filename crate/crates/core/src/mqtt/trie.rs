use std::collections::{BTreeSet, HashMap};

#[derive(Debug)]
struct Node<K> {
    children: HashMap<String, Node<K>>,
    plus: Option<Box<Node<K>>>,
    /// Subscribers of `<path>/#`.
    hash: BTreeSet<K>,
    /// Subscribers of exactly `<path>`.
    exact: BTreeSet<K>,
}

impl<K> Default for Node<K> {
    fn default() -> Self {
        Self { children: HashMap::new(), plus: None, hash: BTreeSet::new(), exact: BTreeSet::new() }
    }
}

impl<K: Ord + Clone> Node<K> {
    fn is_empty(&self) -> bool {
        self.children.is_empty() && self.plus.is_none() && self.hash.is_empty() && self.exact.is_empty()
    }

    fn collect(&self, levels: &[&str], root: bool, out: &mut BTreeSet<K>) {
        let dollar = root && levels.first().is_some_and(|l| l.starts_with('$'));
        if !dollar {
            out.extend(self.hash.iter().cloned());
        }
        let Some((head, tail)) = levels.split_first() else {
            out.extend(self.exact.iter().cloned());
            return;
        };
        if let Some(child) = self.children.get(*head) {
            child.collect(tail, false, out);
        }
        if !dollar {
            if let Some(plus) = &self.plus {
                plus.collect(tail, false, out);
            }
        }
    }

    fn remove(&mut self, levels: &[&str], key: &K) -> bool {
        let removed = match levels.split_first() {
            None => self.exact.remove(key),
            Some((&"#", [])) => self.hash.remove(key),
            Some((&"+", tail)) => match self.plus.as_mut() {
                Some(plus) => {
                    let r = plus.remove(tail, key);
                    if plus.is_empty() {
                        self.plus = None;
                    }
                    r
                }
                None => false,
            },
            Some((head, tail)) => match self.children.get_mut(*head) {
                Some(child) => {
                    let r = child.remove(tail, key);
                    if child.is_empty() {
                        self.children.remove(*head);
                    }
                    r
                }
                None => false,
            },
        };
        removed
    }
}

/// Topic-level trie with `+` and `#` wildcard nodes.
///
/// A lookup returns each subscriber at most once, no matter how many of its
/// filters match.
#[derive(Debug)]
pub struct SubscriptionTrie<K> {
    root: Node<K>,
    filters: usize,
}

impl<K> Default for SubscriptionTrie<K> {
    fn default() -> Self {
        Self { root: Node::default(), filters: 0 }
    }
}

impl<K: Ord + Clone> SubscriptionTrie<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `key` under `filter`. The filter must already be validated.
    /// Returns false if it was already present.
    pub fn insert(&mut self, filter: &str, key: K) -> bool {
        let mut node = &mut self.root;
        let levels: Vec<&str> = filter.split('/').collect();
        for (i, level) in levels.iter().enumerate() {
            let last = i + 1 == levels.len();
            match *level {
                "#" if last => {
                    let added = node.hash.insert(key);
                    self.filters += added as usize;
                    return added;
                }
                "+" => node = node.plus.get_or_insert_with(Default::default),
                l => node = node.children.entry(l.to_string()).or_default(),
            }
        }
        let added = node.exact.insert(key);
        self.filters += added as usize;
        added
    }

    pub fn remove(&mut self, filter: &str, key: &K) -> bool {
        let levels: Vec<&str> = filter.split('/').collect();
        let removed = self.root.remove(&levels, key);
        self.filters -= removed as usize;
        removed
    }

    /// All subscribers whose filters match `topic`, deduplicated.
    pub fn matches(&self, topic: &str) -> BTreeSet<K> {
        let levels: Vec<&str> = topic.split('/').collect();
        let mut out = BTreeSet::new();
        self.root.collect(&levels, true, &mut out);
        out
    }

    /// Number of (filter, key) entries.
    pub fn len(&self) -> usize {
        self.filters
    }

    pub fn is_empty(&self) -> bool {
        self.filters == 0
    }
}
