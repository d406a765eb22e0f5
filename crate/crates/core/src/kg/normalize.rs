//! Surface-form normalization: ordered rewrite rules iterated to a fixpoint.

use std::collections::BTreeMap;

/// One rewrite step. Rules are applied in list order, once per pipeline
/// pass; the pipeline repeats until the string stops changing.
#[derive(Clone, Debug)]
pub enum NormalizeRule {
    /// Removes the longest matching prefix from the set, if any.
    StripPrefixSet(Vec<String>),
    /// Removes the longest matching suffix from the set, if any.
    StripSuffixSet(Vec<String>),
    /// Replaces the whole string when it appears as a key.
    AliasLookup(BTreeMap<String, String>),
    /// Trims and collapses interior whitespace runs to single spaces.
    WhitespaceFold,
}

impl NormalizeRule {
    fn apply(&self, s: &str) -> String {
        match self {
            NormalizeRule::StripPrefixSet(set) => match longest(set, |p| s.starts_with(p)) {
                Some(p) => s[p.len()..].to_string(),
                None => s.to_string(),
            },
            NormalizeRule::StripSuffixSet(set) => match longest(set, |p| s.ends_with(p)) {
                Some(p) => s[..s.len() - p.len()].to_string(),
                None => s.to_string(),
            },
            NormalizeRule::AliasLookup(table) => {
                table.get(s).cloned().unwrap_or_else(|| s.to_string())
            }
            NormalizeRule::WhitespaceFold => {
                s.split_whitespace().collect::<Vec<_>>().join(" ")
            }
        }
    }
}

/// Longest entry satisfying `pred`; ties (equal length) broken by the
/// lexicographically smallest entry so the choice never depends on set
/// order. Empty entries are ignored.
fn longest<'a>(set: &'a [String], pred: impl Fn(&str) -> bool) -> Option<&'a String> {
    set.iter()
        .filter(|p| !p.is_empty() && pred(p))
        .min_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)))
}

/// Applies the rule pipeline to a fixpoint. If the rewrite orbit cycles
/// (alias tables may be circular), the lexicographically smallest member of
/// the cycle is returned, which keeps the function total and idempotent.
pub fn normalize_name(raw: &str, rules: &[NormalizeRule]) -> String {
    let mut seen: Vec<String> = Vec::new();
    let mut cur = raw.to_string();
    loop {
        let mut next = cur.clone();
        for rule in rules {
            next = rule.apply(&next);
        }
        if next == cur {
            return cur;
        }
        if let Some(pos) = seen.iter().position(|s| *s == next) {
            // cycle: the states from next's first occurrence through cur
            let mut members: Vec<&String> = seen[pos..].iter().collect();
            members.push(&cur);
            return (*members.iter().min().unwrap()).clone();
        }
        seen.push(cur);
        cur = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn company_rules() -> Vec<NormalizeRule> {
        vec![
            NormalizeRule::StripPrefixSet(vec!["Shanghai".into(), "Beijing".into()]),
            NormalizeRule::StripSuffixSet(vec!["Co., Ltd.".into(), "Court".into()]),
            NormalizeRule::WhitespaceFold,
        ]
    }

    #[test]
    fn strips_location_and_suffix() {
        assert_eq!(normalize_name("Shanghai Foo Co., Ltd.", &company_rules()), "Foo");
    }

    #[test]
    fn canonical_name_unchanged() {
        assert_eq!(normalize_name("Foo", &company_rules()), "Foo");
    }

    #[test]
    fn idempotent_on_samples() {
        let rules = company_rules();
        for raw in ["Shanghai  Foo Co., Ltd.", "Beijing High Court", "", "  a  b  "] {
            let once = normalize_name(raw, &rules);
            assert_eq!(normalize_name(&once, &rules), once, "raw={raw:?}");
        }
    }

    #[test]
    fn alias_lookup_rewrites() {
        let table: BTreeMap<_, _> = [("华泰".to_string(), "华泰证券".to_string())].into();
        let rules = vec![NormalizeRule::AliasLookup(table)];
        assert_eq!(normalize_name("华泰", &rules), "华泰证券");
        assert_eq!(normalize_name("别的", &rules), "别的");
    }

    #[test]
    fn alias_cycle_resolves_to_smallest() {
        let table: BTreeMap<_, _> = [
            ("b".to_string(), "c".to_string()),
            ("c".to_string(), "a".to_string()),
            ("a".to_string(), "b".to_string()),
        ]
        .into();
        let rules = vec![NormalizeRule::AliasLookup(table)];
        for start in ["a", "b", "c"] {
            assert_eq!(normalize_name(start, &rules), "a");
        }
        // idempotence holds on the cycle representative too
        assert_eq!(normalize_name("a", &rules), "a");
    }

    #[test]
    fn longest_prefix_wins() {
        let rules = vec![NormalizeRule::StripPrefixSet(vec![
            "New".into(),
            "New York ".into(),
        ])];
        assert_eq!(normalize_name("New York Times", &rules), "Times");
    }

    #[test]
    fn repeated_suffixes_need_fixpoint() {
        let rules = vec![NormalizeRule::StripSuffixSet(vec![" Branch".into()])];
        assert_eq!(normalize_name("Bank Branch Branch", &rules), "Bank");
    }

    #[test]
    fn whitespace_fold() {
        let rules = vec![NormalizeRule::WhitespaceFold];
        assert_eq!(normalize_name("  a \t b\u{3000}c ", &rules), "a b c");
    }
}
