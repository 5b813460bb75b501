use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{AgentId, AgentProfile};
use crate::error::{Error, Result};

/// Undirected acquaintance graph over the agent population.
///
/// Adjacency is symmetric and mirrored into every agent's `neighbors` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct SocialNetwork {
    agents: BTreeMap<AgentId, AgentProfile>,
}

/// Wire form: `{agents:[{id,theta,arrival,neighbors}], edges:[[u,v],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub agents: Vec<AgentProfile>,
    #[serde(default)]
    pub edges: Vec<[AgentId; 2]>,
}

impl TryFrom<NetworkDoc> for SocialNetwork {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        SocialNetwork::with_edges(doc.agents, doc.edges)
    }
}

impl From<SocialNetwork> for NetworkDoc {
    fn from(net: SocialNetwork) -> Self {
        let edges = net.edges();
        NetworkDoc {
            agents: net.agents.into_values().collect(),
            edges,
        }
    }
}

impl SocialNetwork {
    /// Builds a network from profiles whose neighbor sets must already be
    /// symmetric.
    pub fn new(agents: Vec<AgentProfile>) -> Result<Self> {
        Self::with_edges(agents, Vec::new())
    }

    /// Builds a network from profiles plus an explicit edge list. An agent's
    /// listed neighbor must either list it back or appear in `edges`.
    pub fn with_edges(agents: Vec<AgentProfile>, edges: Vec<[AgentId; 2]>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for a in agents {
            a.validate()?;
            let id = a.id;
            if map.insert(id, a).is_some() {
                return Err(Error::DuplicateAgent(id));
            }
        }
        let mut edge_set = BTreeSet::new();
        for [u, v] in edges {
            if u == v {
                return Err(Error::InvalidAgent {
                    agent: u,
                    reason: "self-edges are not allowed".into(),
                });
            }
            for w in [u, v] {
                if !map.contains_key(&w) {
                    return Err(Error::UnknownAgent(w));
                }
            }
            edge_set.insert((u.min(v), u.max(v)));
        }
        for a in map.values() {
            for &j in &a.neighbors {
                let other = map.get(&j).ok_or(Error::UnknownAgent(j))?;
                let key = (a.id.min(j), a.id.max(j));
                if !other.neighbors.contains(&a.id) && !edge_set.contains(&key) {
                    return Err(Error::AsymmetricEdge(a.id, j));
                }
                edge_set.insert(key);
            }
        }
        for (u, v) in edge_set {
            map.get_mut(&u).expect("checked").neighbors.insert(v);
            map.get_mut(&v).expect("checked").neighbors.insert(u);
        }
        Ok(SocialNetwork { agents: map })
    }

    /// Complete graph on agents `1..=n` with the given values, all arriving at 0.
    pub fn complete(thetas: &[f64]) -> Result<Self> {
        let n = thetas.len() as u32;
        let edges = (1..=n)
            .flat_map(|u| (u + 1..=n).map(move |v| [AgentId(u), AgentId(v)]))
            .collect();
        Self::with_edges(Self::plain(thetas), edges)
    }

    /// Path `1 - 2 - ... - n`.
    pub fn path(thetas: &[f64]) -> Result<Self> {
        let n = thetas.len() as u32;
        let edges = (1..n).map(|u| [AgentId(u), AgentId(u + 1)]).collect();
        Self::with_edges(Self::plain(thetas), edges)
    }

    /// Star with agent 1 at the hub.
    pub fn star(thetas: &[f64]) -> Result<Self> {
        let n = thetas.len() as u32;
        let edges = (2..=n).map(|v| [AgentId(1), AgentId(v)]).collect();
        Self::with_edges(Self::plain(thetas), edges)
    }

    fn plain(thetas: &[f64]) -> Vec<AgentProfile> {
        thetas
            .iter()
            .enumerate()
            .map(|(i, &t)| AgentProfile::new(i as u32 + 1, t, 0.0))
            .collect()
    }

    /// Replaces arrival times, in id order.
    pub fn with_arrivals(mut self, arrivals: &[f64]) -> Result<Self> {
        if arrivals.len() != self.agents.len() {
            return Err(Error::param("arrivals", "one arrival per agent required"));
        }
        for (a, &t) in self.agents.values_mut().zip(arrivals) {
            a.arrival = t;
            a.validate()?;
        }
        Ok(self)
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentProfile> {
        self.agents.get(&id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentProfile> + '_ {
        self.agents.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.agents.contains_key(&id)
    }

    pub fn theta(&self, id: AgentId) -> Option<f64> {
        self.agents.get(&id).map(|a| a.theta)
    }

    pub fn neighbors(&self, id: AgentId) -> Option<&BTreeSet<AgentId>> {
        self.agents.get(&id).map(|a| &a.neighbors)
    }

    /// Each undirected edge once, as `[min, max]`.
    pub fn edges(&self) -> Vec<[AgentId; 2]> {
        self.agents
            .values()
            .flat_map(|a| {
                a.neighbors
                    .iter()
                    .filter(move |&&j| j > a.id)
                    .map(move |&j| [a.id, j])
            })
            .collect()
    }

    /// N: agents with a positive value for the project.
    pub fn valued(&self) -> impl Iterator<Item = &AgentProfile> + '_ {
        self.agents.values().filter(|a| a.theta > 0.0)
    }

    /// n = |N|.
    pub fn valued_count(&self) -> usize {
        self.valued().count()
    }

    /// ϑ_N over the whole population.
    pub fn net_value(&self) -> f64 {
        super::net_value(self.agents.values())
    }

    /// The subnetwork induced by `ids`; edges leaving the set are dropped.
    pub fn induced(&self, ids: &BTreeSet<AgentId>) -> SocialNetwork {
        let agents = self
            .agents
            .values()
            .filter(|a| ids.contains(&a.id))
            .map(|a| AgentProfile {
                neighbors: a.neighbors.intersection(ids).copied().collect(),
                ..a.clone()
            })
            .map(|a| (a.id, a))
            .collect();
        SocialNetwork { agents }
    }

    /// Breadth-first hop distances from `source`, restricted to `allowed`.
    pub(crate) fn bfs(&self, source: AgentId, allowed: &BTreeSet<AgentId>) -> BTreeMap<AgentId, usize> {
        let mut dist = BTreeMap::new();
        dist.insert(source, 0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for &v in &self.agents[&u].neighbors {
                if allowed.contains(&v) && !dist.contains_key(&v) {
                    dist.insert(v, du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Whether the subgraph induced by the valued agents is connected.
    pub fn is_support_connected(&self) -> bool {
        let support: BTreeSet<_> = self.valued().map(|a| a.id).collect();
        match support.first() {
            None => true,
            Some(&s) => self.bfs(s, &support).len() == support.len(),
        }
    }

    /// Diameter d of the subgraph induced by N, by all-pairs BFS.
    pub fn diameter(&self) -> Result<usize> {
        let support: BTreeSet<_> = self.valued().map(|a| a.id).collect();
        let mut diameter = 0;
        for &s in &support {
            let dist = self.bfs(s, &support);
            if dist.len() != support.len() {
                return Err(Error::DisconnectedSupport);
            }
            diameter = diameter.max(dist.values().copied().max().unwrap_or(0));
        }
        Ok(diameter)
    }
}
