use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Frame, Group, Presentation, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    GrandTest,
    Impersonation,
    Obfuscation,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::GrandTest => "grand_test",
            Protocol::Impersonation => "impersonation",
            Protocol::Obfuscation => "obfuscation",
        }
    }

    /// Whether a presentation of `group` is part of this protocol.
    pub fn admits(self, group: Group) -> bool {
        match (self, group) {
            (_, Group::None) | (Protocol::GrandTest, _) => true,
            (Protocol::Impersonation, g) => g == Group::Impersonation,
            (Protocol::Obfuscation, g) => g == Group::Obfuscation,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grand_test" => Ok(Protocol::GrandTest),
            "impersonation" => Ok(Protocol::Impersonation),
            "obfuscation" => Ok(Protocol::Obfuscation),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

/// Train/dev/test partition of a dataset filtered by protocol.
#[derive(Debug, Clone)]
pub struct ProtocolView<'a> {
    pub protocol: Protocol,
    pub train: Vec<&'a Presentation>,
    pub dev: Vec<&'a Presentation>,
    pub test: Vec<&'a Presentation>,
    /// Non-fatal issues, e.g. a split left empty by the filter.
    pub warnings: Vec<String>,
}

impl<'a> ProtocolView<'a> {
    pub fn split(&self, split: Split) -> &[&'a Presentation] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn select_protocol(
    data: &[Presentation],
    protocol: Protocol,
) -> Result<ProtocolView<'_>, DatasetError> {
    if data.is_empty() {
        return Err(DatasetError::Domain("no presentations to filter".into()));
    }
    let mut view = ProtocolView {
        protocol,
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        warnings: Vec::new(),
    };
    for p in data.iter().filter(|p| protocol.admits(p.group)) {
        match p.split {
            Split::Train => view.train.push(p),
            Split::Dev => view.dev.push(p),
            Split::Test => view.test.push(p),
        }
    }
    for split in [Split::Train, Split::Dev, Split::Test] {
        if view.split(split).is_empty() {
            let msg = format!("protocol {protocol}: {split} split is empty");
            log::warn!("{msg}");
            view.warnings.push(msg);
        }
    }
    Ok(view)
}

/// Endpoint-inclusive evenly spaced indices, `round(j (n-1) / (k-1))`, deduplicated.
pub fn sample_frame_indices(n: usize, k: usize) -> Vec<usize> {
    assert!(k >= 1, "at least one frame must be requested");
    if n <= k {
        return (0..n).collect();
    }
    if k == 1 {
        return vec![0];
    }
    let (num, den) = ((n - 1) as u64, (k - 1) as u64);
    let mut out: Vec<usize> = Vec::with_capacity(k);
    for j in 0..k as u64 {
        // round half up, in integers
        let idx = ((2 * j * num + den) / (2 * den)) as usize;
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

pub fn sample_frames(p: &Presentation, k: usize) -> Vec<&Frame> {
    sample_frame_indices(p.frames().len(), k)
        .into_iter()
        .map(|i| &p.frames()[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AttackType, BandImage, SpectralStack};
    use proptest::prelude::*;

    fn pres(id: &str, t: AttackType, split: Split) -> Presentation {
        let s = SpectralStack::new(0, vec![BandImage::filled(1, 1, 940, 0.1).unwrap()]).unwrap();
        Presentation::new(id, t, split, vec![Frame::in_memory(s)]).unwrap()
    }

    fn mixed_set() -> Vec<Presentation> {
        let mut v = Vec::new();
        for i in 0..5 {
            v.push(pres(&format!("bf{i}"), AttackType::None, Split::Train));
        }
        for i in 0..3 {
            v.push(pres(&format!("m{i}"), AttackType::RigidMask, Split::Dev));
        }
        for i in 0..2 {
            v.push(pres(&format!("t{i}"), AttackType::Tattoo, Split::Test));
        }
        v
    }

    fn ids(view: &ProtocolView<'_>) -> Vec<String> {
        let mut v: Vec<String> = [&view.train, &view.dev, &view.test]
            .into_iter()
            .flatten()
            .map(|p| p.id.clone())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn protocol_filters() {
        let data = mixed_set();
        let gt = select_protocol(&data, Protocol::GrandTest).unwrap();
        assert_eq!(gt.len(), 10);
        let imp = select_protocol(&data, Protocol::Impersonation).unwrap();
        assert_eq!(imp.len(), 8);
        assert!(ids(&imp).iter().all(|i| !i.starts_with('t')));
        assert_eq!(imp.train.len(), 5);
        assert!(!imp.warnings.is_empty(), "test split is empty under impersonation");
        let obf = select_protocol(&data, Protocol::Obfuscation).unwrap();
        assert_eq!(obf.len(), 7);
        assert!(ids(&obf).iter().all(|i| !i.starts_with('m')));

        // partition: grand test = impersonation attacks + obfuscation attacks + bonafide
        let attacks_imp: Vec<_> = ids(&imp).into_iter().filter(|i| !i.starts_with("bf")).collect();
        let attacks_obf: Vec<_> = ids(&obf).into_iter().filter(|i| !i.starts_with("bf")).collect();
        assert!(attacks_imp.iter().all(|a| !attacks_obf.contains(a)));
        assert_eq!(attacks_imp.len() + attacks_obf.len() + 5, gt.len());
        assert!(select_protocol(&[], Protocol::GrandTest).is_err());
    }

    #[test]
    fn even_sampling_examples() {
        assert_eq!(sample_frame_indices(10, 10), (0..10).collect::<Vec<_>>());
        assert_eq!(
            sample_frame_indices(20, 10),
            vec![0, 2, 4, 6, 8, 11, 13, 15, 17, 19]
        );
        assert_eq!(sample_frame_indices(3, 10), vec![0, 1, 2]);
        assert_eq!(sample_frame_indices(7, 1), vec![0]);
    }

    proptest! {
        #[test]
        fn sampling_is_ordered_and_idempotent(n in 1usize..200, k in 1usize..30) {
            let idx = sample_frame_indices(n, k);
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(idx.len(), n.min(k));
            prop_assert_eq!(idx.first().copied(), Some(0));
            if k > 1 || n == 1 { prop_assert_eq!(idx.last().copied(), Some(n - 1)); }
            // sampling the sampled list again selects all of it
            let again: Vec<usize> = sample_frame_indices(idx.len(), k).into_iter().map(|i| idx[i]).collect();
            prop_assert_eq!(again, idx);
        }
    }
}
