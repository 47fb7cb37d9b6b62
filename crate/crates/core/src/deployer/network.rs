use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A host the operator can name in `from`/`to`, and the interface the
/// chain attaches to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub id: String,
    pub attach: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub capacity_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VnfImage {
    pub image: String,
    pub command: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv4Pool {
    pub network: Ipv4Addr,
    pub prefix: u8,
}

impl Ipv4Pool {
    /// Number of addresses in the block, network and broadcast included.
    pub fn size(&self) -> u64 {
        1u64 << (32 - u32::from(self.prefix))
    }

    /// Address at `offset` from the network address, if it is a usable host.
    pub fn host(&self, offset: u32) -> Option<Ipv4Addr> {
        let offset64 = u64::from(offset);
        (offset64 > 0 && offset64 + 1 < self.size()).then(|| Ipv4Addr::from(u32::from(self.network) + offset))
    }
}

impl FromStr for Ipv4Pool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, prefix) = s.split_once('/').ok_or_else(|| format!("`{s}` is not in CIDR notation"))?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| format!("`{addr}` is not an IPv4 address"))?;
        let prefix: u8 = prefix
            .parse()
            .ok()
            .filter(|p| *p <= 30)
            .ok_or_else(|| format!("prefix `/{prefix}` must be between 0 and 30"))?;
        let mask = if prefix == 0 { 0 } else { u32::MAX << (32 - prefix) };
        Ok(Self {
            network: Ipv4Addr::from(u32::from(addr) & mask),
            prefix,
        })
    }
}

impl std::fmt::Display for Ipv4Pool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix)
    }
}

impl Serialize for Ipv4Pool {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4Pool {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Declarative description of the target network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    /// Node where middleboxes are started; traffic through a chain
    /// detours via this node.
    pub datacenter: String,
    pub endpoints: Vec<Endpoint>,
    pub links: Vec<Link>,
    pub vnf_images: BTreeMap<String, VnfImage>,
    pub ip_pool: Ipv4Pool,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed network model: {0}")]
    Format(#[from] serde_json::Error),
    #[error("duplicate endpoint id `{0}`")]
    DuplicateEndpoint(String),
    #[error("link {a} - {b} must have a positive capacity")]
    Capacity { a: String, b: String },
}

impl NetworkModel {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: NetworkModel = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The two-switch scenario with an Iperf pair and a Web pair.
    pub fn iperf_fixture() -> Self {
        Self::from_json(include_str!("../../data/iperf_network.json")).expect("bundled fixture is valid")
    }

    fn check(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for e in &self.endpoints {
            if !seen.insert(e.id.as_str()) {
                return Err(ModelError::DuplicateEndpoint(e.id.clone()));
            }
        }
        for l in &self.links {
            if !(l.capacity_mbps > 0.0 && l.capacity_mbps.is_finite()) {
                return Err(ModelError::Capacity {
                    a: l.a.clone(),
                    b: l.b.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn endpoint(&self, id: &str) -> Option<&Endpoint> {
        self.endpoints.iter().find(|e| e.id == id)
    }

    fn adjacency(&self) -> HashMap<&str, Vec<(&str, f64)>> {
        let mut best: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for l in &self.links {
            for (x, y) in [(l.a.as_str(), l.b.as_str()), (l.b.as_str(), l.a.as_str())] {
                let cap = best.entry((x, y)).or_insert(l.capacity_mbps);
                *cap = cap.max(l.capacity_mbps);
            }
        }
        let mut adj: HashMap<&str, Vec<(&str, f64)>> = HashMap::new();
        for ((x, y), cap) in best {
            adj.entry(x).or_default().push((y, cap));
        }
        adj
    }

    /// Fewest-hop path from `from` to `to`, ties broken by node name.
    /// Returns the node sequence and the capacity of each hop.
    pub fn shortest_path(&self, from: &str, to: &str) -> Option<(Vec<String>, Vec<f64>)> {
        if from == to {
            return Some((vec![from.to_string()], Vec::new()));
        }
        let adj = self.adjacency();
        let mut parent: HashMap<&str, (&str, f64)> = HashMap::new();
        let mut queue = VecDeque::from([from]);
        let mut visited = HashSet::from([from]);
        while let Some(node) = queue.pop_front() {
            for &(next, cap) in adj.get(node).map(Vec::as_slice).unwrap_or_default() {
                if visited.insert(next) {
                    parent.insert(next, (node, cap));
                    if next == to {
                        let mut nodes = vec![to.to_string()];
                        let mut caps = Vec::new();
                        let mut cur = to;
                        while let Some(&(prev, cap)) = parent.get(cur) {
                            nodes.push(prev.to_string());
                            caps.push(cap);
                            cur = prev;
                        }
                        nodes.reverse();
                        caps.reverse();
                        return Some((nodes, caps));
                    }
                    queue.push_back(next);
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_parsing() {
        let pool: Ipv4Pool = "10.0.0.7/24".parse().unwrap();
        assert_eq!(pool.to_string(), "10.0.0.0/24");
        assert_eq!(pool.host(20), Some(Ipv4Addr::new(10, 0, 0, 20)));
        assert_eq!(pool.host(255), None);
        assert_eq!(pool.host(0), None);
        assert!("10.0.0.0".parse::<Ipv4Pool>().is_err());
        assert!("10.0.0.0/31".parse::<Ipv4Pool>().is_err());
    }

    #[test]
    fn fixture_loads() {
        let net = NetworkModel::iperf_fixture();
        assert_eq!(net.datacenter, "vnfs_dc");
        assert_eq!(net.endpoint("iperf client").unwrap().attach, "iperf-c:c-eth0");
        let (nodes, caps) = net.shortest_path("iperf client", "vnfs_dc").unwrap();
        assert_eq!(nodes.first().unwrap(), "iperf client");
        assert_eq!(caps.len(), nodes.len() - 1);
    }

    #[test]
    fn model_invariants() {
        let dup = r#"{"datacenter":"dc","ip_pool":"10.0.0.0/24","vnf_images":{},"links":[],
            "endpoints":[{"id":"a","attach":"x"},{"id":"a","attach":"y"}]}"#;
        assert!(matches!(NetworkModel::from_json(dup), Err(ModelError::DuplicateEndpoint(_))));
        let cap = r#"{"datacenter":"dc","ip_pool":"10.0.0.0/24","vnf_images":{},"endpoints":[],
            "links":[{"a":"a","b":"b","capacity_mbps":0}]}"#;
        assert!(matches!(NetworkModel::from_json(cap), Err(ModelError::Capacity { .. })));
    }

    #[test]
    fn path_tie_break_is_by_name() {
        let net = NetworkModel::from_json(
            r#"{"datacenter":"dc","ip_pool":"10.0.0.0/24","vnf_images":{},"endpoints":[],
            "links":[{"a":"s","b":"y","capacity_mbps":1},{"a":"s","b":"x","capacity_mbps":2},
                     {"a":"x","b":"t","capacity_mbps":3},{"a":"y","b":"t","capacity_mbps":4}]}"#,
        )
        .unwrap();
        let (nodes, caps) = net.shortest_path("s", "t").unwrap();
        assert_eq!(nodes, ["s", "x", "t"]);
        assert_eq!(caps, [2.0, 3.0]);
        assert!(net.shortest_path("s", "nowhere").is_none());
    }
}
