use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{AgentId, ContributionEvent, SPONSOR};
use crate::error::{Error, Result};

/// Sponsor-rooted referral tree over everyone who acted or was referred.
///
/// Every non-root node has exactly one parent: the referrer whose referral
/// reached it first, or the sponsor when the agent showed up on its own
/// before any referral arrived.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferralForest {
    parent: BTreeMap<AgentId, AgentId>,
    /// When each node joined the tree.
    referral_time: BTreeMap<AgentId, f64>,
}

impl ReferralForest {
    pub fn parent(&self, id: AgentId) -> Option<AgentId> {
        self.parent.get(&id).copied()
    }

    pub fn joined_at(&self, id: AgentId) -> Option<f64> {
        self.referral_time.get(&id).copied()
    }

    /// Direct children, i.e. the agents Mᵢ credited to `id`.
    pub fn children(&self, id: AgentId) -> impl Iterator<Item = AgentId> + '_ {
        self.parent
            .iter()
            .filter(move |&(_, &p)| p == id)
            .map(|(&c, _)| c)
    }

    /// Non-root nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.parent.keys().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len()
    }

    pub fn contains(&self, id: AgentId) -> bool {
        id.is_sponsor() || self.parent.contains_key(&id)
    }

    /// Hops from the sponsor.
    pub fn depth(&self, id: AgentId) -> Option<usize> {
        let mut depth = 0;
        let mut cur = id;
        while !cur.is_sponsor() {
            cur = self.parent(cur)?;
            depth += 1;
            if depth > self.parent.len() {
                return None;
            }
        }
        Some(depth)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Candidate attachment. Field order is the precedence: earlier time first,
/// then a referral before a self-join at the same instant, then the lower
/// referrer id, then the node id.
type Candidate = (Time, u8, AgentId, AgentId);

const VIA_REFERRAL: u8 = 0;
const VIA_SPONSOR: u8 = 1;

/// Builds the referral forest from contribution events.
///
/// Nodes are attached in order of the earliest candidate link. A referral
/// becomes a candidate only once its referrer is itself attached, which
/// keeps the result acyclic for any timestamps. The result depends only on
/// the set of events, not on their order in the slice.
pub fn build_referral_forest(events: &[ContributionEvent]) -> Result<ReferralForest> {
    let mut by_agent: BTreeMap<AgentId, &ContributionEvent> = BTreeMap::new();
    for e in events {
        if e.agent.is_sponsor() {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: "the sponsor does not act".into(),
            });
        }
        if !e.time.is_finite() || e.referral_time.is_some_and(|t| !t.is_finite()) {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: "times must be finite".into(),
            });
        }
        if e.referred.contains(&SPONSOR) || e.referred.contains(&e.agent) {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: "cannot refer the sponsor or oneself".into(),
            });
        }
        if by_agent.insert(e.agent, e).is_some() {
            return Err(Error::InvalidEvent {
                agent: e.agent,
                reason: "agents contribute at most once".into(),
            });
        }
    }

    let mut heap: BinaryHeap<Reverse<Candidate>> = by_agent
        .values()
        .map(|e| Reverse((Time(e.time), VIA_SPONSOR, SPONSOR, e.agent)))
        .collect();
    let mut forest = ReferralForest::default();

    while let Some(Reverse((Time(t), _, parent, node))) = heap.pop() {
        if forest.parent.contains_key(&node) {
            continue;
        }
        forest.parent.insert(node, parent);
        forest.referral_time.insert(node, t);
        if let Some(e) = by_agent.get(&node) {
            let at = e.effective_referral_time().max(t);
            for &j in &e.referred {
                if !forest.parent.contains_key(&j) {
                    heap.push(Reverse((Time(at), VIA_REFERRAL, node, j)));
                }
            }
        }
    }
    Ok(forest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(agent: u32, time: f64, referred: &[u32]) -> ContributionEvent {
        ContributionEvent::new(agent, 1.0, time).referring(referred.iter().copied())
    }

    #[test]
    fn earliest_referral_takes_precedence() {
        let events = [ev(1, 2.0, &[4]), ev(3, 5.0, &[4]), ev(4, 6.0, &[])];
        let f = build_referral_forest(&events).unwrap();
        assert_eq!(f.parent(AgentId(4)), Some(AgentId(1)));
        assert_eq!(f.parent(AgentId(1)), Some(SPONSOR));
        assert_eq!(f.parent(AgentId(3)), Some(SPONSOR));
    }

    #[test]
    fn empty_events_give_bare_root() {
        let f = build_referral_forest(&[]).unwrap();
        assert_eq!(f.edge_count(), 0);
        assert!(f.contains(SPONSOR));
    }

    #[test]
    fn simultaneous_referrals_prefer_lower_referrer() {
        let events = [ev(3, 1.0, &[5]), ev(2, 1.0, &[5])];
        let f = build_referral_forest(&events).unwrap();
        assert_eq!(f.parent(AgentId(5)), Some(AgentId(2)));
    }

    #[test]
    fn contributor_who_arrived_first_stays_with_sponsor() {
        // agent 2 acted at t=1, agent 1 refers it later
        let events = [ev(2, 1.0, &[]), ev(1, 3.0, &[2])];
        let f = build_referral_forest(&events).unwrap();
        assert_eq!(f.parent(AgentId(2)), Some(SPONSOR));
    }

    #[test]
    fn mutual_referrals_do_not_cycle() {
        let events = [ev(1, 1.0, &[2]), ev(2, 1.0, &[1])];
        let f = build_referral_forest(&events).unwrap();
        assert_eq!(f.parent(AgentId(1)), Some(SPONSOR));
        assert_eq!(f.parent(AgentId(2)), Some(AgentId(1)));

        let mut early = ev(2, 3.0, &[1]);
        early.referral_time = Some(0.0);
        let f = build_referral_forest(&[ev(1, 1.0, &[2]), early]).unwrap();
        for n in f.nodes() {
            assert!(f.depth(n).is_some());
        }
    }

    #[test]
    fn referring_sponsor_or_self_is_rejected() {
        assert!(build_referral_forest(&[ev(1, 0.0, &[0])]).is_err());
        assert!(build_referral_forest(&[ev(1, 0.0, &[1])]).is_err());
        assert!(build_referral_forest(&[ev(1, 0.0, &[]), ev(1, 1.0, &[])]).is_err());
    }

    #[test]
    fn project_p2_referral_tree() {
        // Five aware contributors; 1, 3, 4 and 5 refer their other neighbors.
        let events = [
            ev(1, 1.0, &[6, 7]),
            ev(2, 1.5, &[]),
            ev(3, 2.0, &[8]),
            ev(4, 2.5, &[9, 10]),
            ev(5, 3.0, &[11, 12]),
            ev(6, 4.0, &[]),
            ev(9, 4.0, &[]),
        ];
        let f = build_referral_forest(&events).unwrap();
        let roots: Vec<_> = f.children(SPONSOR).map(|a| a.0).collect();
        assert_eq!(roots, vec![1, 2, 3, 4, 5]);
        let kids = |p: u32| f.children(AgentId(p)).map(|a| a.0).collect::<Vec<_>>();
        assert_eq!(kids(1), vec![6, 7]);
        assert_eq!(kids(2), Vec::<u32>::new());
        assert_eq!(kids(3), vec![8]);
        assert_eq!(kids(4), vec![9, 10]);
        assert_eq!(kids(5), vec![11, 12]);
        assert_eq!(f.edge_count(), 12);
    }
}
