use std::collections::BTreeMap;

use super::format::FormatError;
use crate::archspec::{build, Family, HyperParams, LayerGraph, ParamSpec};
use crate::tensor::Tensor;

/// Learned tensors of one network, keyed by canonical parameter name.
///
/// The name set always equals the canonical set of the graph built from
/// `hp` and `family`, and every tensor has the expected extents.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    hp: HyperParams,
    family: Family,
    entries: BTreeMap<String, Tensor>,
}

/// Checks a name → dims map against a graph's canonical parameter list.
pub(crate) fn check_names<'a>(
    specs: &[ParamSpec],
    mut found: impl Iterator<Item = (&'a str, &'a [usize])>,
) -> Result<(), FormatError> {
    let expected: BTreeMap<&str, &[usize]> = specs.iter().map(|p| (p.name.as_str(), p.dims.as_slice())).collect();
    let mut seen = std::collections::BTreeSet::new();
    found.try_for_each(|(name, dims)| {
        let Some(want) = expected.get(name) else {
            return Err(FormatError::UnknownParameter(name.to_string()));
        };
        if *want != dims {
            return Err(FormatError::DimsMismatch {
                name: name.to_string(),
                expected: want.to_vec(),
                found: dims.to_vec(),
            });
        }
        seen.insert(name);
        Ok(())
    })?;
    match specs.iter().find(|p| !seen.contains(p.name.as_str())) {
        Some(p) => Err(FormatError::MissingParameter(p.name.clone())),
        None => Ok(()),
    }
}

impl WeightStore {
    pub fn new(
        hp: HyperParams,
        family: Family,
        entries: BTreeMap<String, Tensor>,
    ) -> Result<Self, FormatError> {
        let graph = build(&hp, family)?;
        check_names(
            &graph.param_specs(),
            entries.iter().map(|(k, v)| (k.as_str(), v.dims())),
        )?;
        Ok(Self { hp, family, entries })
    }

    /// Fills every parameter with `init(spec, element_index)`.
    pub fn from_fn(
        hp: HyperParams,
        family: Family,
        mut init: impl FnMut(&ParamSpec, usize) -> f32,
    ) -> Result<Self, FormatError> {
        let graph = build(&hp, family)?;
        let entries = graph
            .param_specs()
            .into_iter()
            .map(|spec| {
                let t = Tensor::from_fn(spec.dims.clone(), |i| init(&spec, i));
                (spec.name, t)
            })
            .collect();
        Ok(Self { hp, family, entries })
    }

    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn graph(&self) -> LayerGraph {
        build(&self.hp, self.family).expect("store was validated against this graph")
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> &BTreeMap<String, Tensor> {
        &self.entries
    }

    /// Replaces one tensor, keeping the extents fixed.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<(), FormatError> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| FormatError::UnknownParameter(name.to_string()))?;
        if slot.dims() != value.dims() {
            return Err(FormatError::DimsMismatch {
                name: name.to_string(),
                expected: slot.dims().to_vec(),
                found: value.dims().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Total number of stored values.
    pub fn numel(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_store() -> WeightStore {
        WeightStore::from_fn(HyperParams::fixed(), Family::EegTcnet, |_, i| i as f32 * 1e-3).unwrap()
    }

    #[test]
    fn element_count_matches_param_count() {
        assert_eq!(fixed_store().numel(), 4272);
    }

    #[test]
    fn detects_missing_and_unknown() {
        let store = fixed_store();
        let mut entries = store.entries().clone();
        entries.remove("L01.gamma");
        let err = WeightStore::new(HyperParams::fixed(), Family::EegTcnet, entries.clone()).unwrap_err();
        assert_eq!(err, FormatError::MissingParameter("L01.gamma".into()));

        entries.insert("L01.gamma".into(), Tensor::zeros(vec![8]));
        entries.insert("L99.weight".into(), Tensor::zeros(vec![1]));
        let err = WeightStore::new(HyperParams::fixed(), Family::EegTcnet, entries).unwrap_err();
        assert_eq!(err, FormatError::UnknownParameter("L99.weight".into()));
    }

    #[test]
    fn set_checks_dims() {
        let mut store = fixed_store();
        assert!(store.set("L01.gamma", Tensor::zeros(vec![9])).is_err());
        store.set("L01.gamma", Tensor::filled(vec![8], 2.0)).unwrap();
        assert_eq!(store.get("L01.gamma").unwrap().data()[0], 2.0);
    }
}
