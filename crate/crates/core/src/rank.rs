//! Coverage-based ranking: matches in functions the fuzzer never reached come first.

use serde::{Deserialize, Serialize};

use crate::corpus::Coverset;
use crate::templates::{Match, MatchSet};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedMatches {
    pub high: Vec<Match>,
    pub low: Vec<Match>,
}

pub fn is_high(m: &Match, coverset: &Coverset) -> bool {
    !coverset.contains(&m.enclosing_function)
}

pub fn rank_matches(matches: &MatchSet, coverset: &Coverset) -> RankedMatches {
    let (high, low) = matches
        .iter()
        .cloned()
        .partition(|m| is_high(m, coverset));
    RankedMatches { high, low }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{NodeId, SourceLocation};
    use crate::interp::FunctionKey;

    fn m(func: &str, line: u32) -> Match {
        let loc = SourceLocation::new("r.mc", line, 1);
        Match {
            loc: loc.clone(),
            end_loc: loc,
            node_id: NodeId(line),
            enclosing_function: FunctionKey::new("r.mc", func),
            snippet: String::new(),
            line_text: String::new(),
        }
    }

    #[test]
    fn untested_ranks_high() {
        let cov: Coverset = [FunctionKey::new("r.mc", "tested")].into_iter().collect();
        assert!(is_high(&m("other", 1), &cov));
        assert!(!is_high(&m("tested", 1), &cov));
        assert!(is_high(&m("tested", 1), &Coverset::default()));
        let set = MatchSet::from_matches([m("tested", 3), m("other", 1), m("other", 5)]);
        let r = rank_matches(&set, &cov);
        assert_eq!(r.high.iter().map(|x| x.loc.line).collect::<Vec<_>>(), vec![1, 5]);
        assert_eq!(r.low.iter().map(|x| x.loc.line).collect::<Vec<_>>(), vec![3]);
        assert_eq!(rank_matches(&MatchSet::default(), &cov), RankedMatches::default());
    }

    #[test]
    fn same_name_in_other_file_is_distinct() {
        let cov: Coverset = [FunctionKey::new("other.mc", "tested")].into_iter().collect();
        assert!(is_high(&m("tested", 1), &cov));
    }
}
