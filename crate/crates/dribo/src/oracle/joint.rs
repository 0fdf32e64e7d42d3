use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Probabilities below this are treated as exact zeros inside p*log(p)
/// terms; exact enumeration never produces meaningful masses this small.
pub const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct VarDef {
    pub name: String,
    pub support: usize,
    bits: u32,
    shift: u32,
}

/// Exact joint distribution over named finite variables. Each atom packs
/// the variable values into one u64 code; marginalization is bit masking.
#[derive(Debug, Clone)]
pub struct JointTable {
    vars: Vec<VarDef>,
    atoms: Vec<(u64, f64)>,
}

fn bits_for(support: usize) -> u32 {
    debug_assert!(support >= 1);
    usize::BITS - (support - 1).max(1).leading_zeros()
}

impl JointTable {
    pub fn new(var_defs: &[(&str, usize)]) -> Result<Self> {
        let mut vars = Vec::with_capacity(var_defs.len());
        let mut shift = 0u32;
        for (name, support) in var_defs {
            if *support == 0 {
                return Err(Error::contract(format!("variable {name} with empty support")));
            }
            let bits = bits_for(*support);
            if shift + bits > 64 {
                return Err(Error::Resource(format!(
                    "variable code space exceeds 64 bits at {name}"
                )));
            }
            vars.push(VarDef {
                name: name.to_string(),
                support: *support,
                bits,
                shift,
            });
            shift += bits;
        }
        Ok(JointTable {
            vars,
            atoms: Vec::new(),
        })
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn atoms(&self) -> &[(u64, f64)] {
        &self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::contract(format!("unknown variable {name:?}")))
    }

    pub fn pack(&self, values: &[usize]) -> Result<u64> {
        if values.len() != self.vars.len() {
            return Err(Error::contract("pack: wrong arity"));
        }
        let mut code = 0u64;
        for (v, def) in values.iter().zip(self.vars.iter()) {
            if *v >= def.support {
                return Err(Error::contract(format!(
                    "value {} out of support {} for {}",
                    v, def.support, def.name
                )));
            }
            code |= (*v as u64) << def.shift;
        }
        Ok(code)
    }

    pub fn value_of(&self, code: u64, var: usize) -> usize {
        let def = &self.vars[var];
        ((code >> def.shift) & ((1u64 << def.bits) - 1)) as usize
    }

    /// Bit offset of a variable inside the packed atom code.
    pub fn shift(&self, var: usize) -> u32 {
        self.vars[var].shift
    }

    /// Add probability mass to one configuration.
    pub fn push_mass(&mut self, code: u64, p: f64) {
        if p > 0.0 {
            self.atoms.push((code, p));
        }
    }

    /// Merge duplicate codes; keeps atom order deterministic (sorted).
    pub fn normalize_atoms(&mut self) {
        let mut map: BTreeMap<u64, f64> = BTreeMap::new();
        for (code, p) in &self.atoms {
            *map.entry(*code).or_insert(0.0) += p;
        }
        self.atoms = map.into_iter().collect();
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum()
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let total = self.total_mass();
        if (total - 1.0).abs() > tol {
            return Err(Error::domain(format!(
                "joint mass {total} deviates from 1 beyond {tol}"
            )));
        }
        if self.atoms.iter().any(|(_, p)| *p < 0.0) {
            return Err(Error::domain("negative probability"));
        }
        Ok(())
    }

    fn indices(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.var_index(n)).collect()
    }

    fn check_disjoint(groups: &[&[usize]]) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for g in groups {
            for i in *g {
                if !seen.insert(*i) {
                    return Err(Error::contract(
                        "variable groups must be disjoint".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn project_key(&self, code: u64, vars: &[usize]) -> u64 {
        // Re-pack the selected values contiguously, in the given var order.
        let mut key = 0u64;
        let mut shift = 0u32;
        for &vi in vars {
            let def = &self.vars[vi];
            key |= (self.value_of(code, vi) as u64) << shift;
            shift += def.bits;
        }
        key
    }

    /// Exact mutual information I(X; Y) in nats.
    pub fn mutual_info(&self, x: &[&str], y: &[&str]) -> Result<f64> {
        let xi = self.indices(x)?;
        let yi = self.indices(y)?;
        Self::check_disjoint(&[&xi, &yi])?;
        let mut pxy: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        let mut px: BTreeMap<u64, f64> = BTreeMap::new();
        let mut py: BTreeMap<u64, f64> = BTreeMap::new();
        for (code, p) in &self.atoms {
            let kx = self.project_key(*code, &xi);
            let ky = self.project_key(*code, &yi);
            *pxy.entry((kx, ky)).or_insert(0.0) += p;
            *px.entry(kx).or_insert(0.0) += p;
            *py.entry(ky).or_insert(0.0) += p;
        }
        let mut mi = 0.0;
        for ((kx, ky), p) in &pxy {
            if *p < PROB_FLOOR {
                continue;
            }
            mi += p * (p / (px[kx] * py[ky])).ln();
        }
        Ok(mi)
    }

    /// Exact conditional mutual information I(X; Y | Z) in nats.
    pub fn conditional_mutual_info(&self, x: &[&str], y: &[&str], z: &[&str]) -> Result<f64> {
        let xi = self.indices(x)?;
        let yi = self.indices(y)?;
        let zi = self.indices(z)?;
        Self::check_disjoint(&[&xi, &yi, &zi])?;
        if zi.is_empty() {
            return self.mutual_info(x, y);
        }
        let mut pxyz: BTreeMap<(u64, u64, u64), f64> = BTreeMap::new();
        let mut pxz: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        let mut pyz: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        let mut pz: BTreeMap<u64, f64> = BTreeMap::new();
        for (code, p) in &self.atoms {
            let kx = self.project_key(*code, &xi);
            let ky = self.project_key(*code, &yi);
            let kz = self.project_key(*code, &zi);
            *pxyz.entry((kx, ky, kz)).or_insert(0.0) += p;
            *pxz.entry((kx, kz)).or_insert(0.0) += p;
            *pyz.entry((ky, kz)).or_insert(0.0) += p;
            *pz.entry(kz).or_insert(0.0) += p;
        }
        let mut cmi = 0.0;
        for ((kx, ky, kz), p) in &pxyz {
            if *p < PROB_FLOOR {
                continue;
            }
            cmi += p * ((p * pz[kz]) / (pxz[&(*kx, *kz)] * pyz[&(*ky, *kz)])).ln();
        }
        Ok(cmi)
    }

    /// Marginal distribution of one variable, as a dense vector.
    pub fn marginal(&self, name: &str) -> Result<Vec<f64>> {
        let vi = self.var_index(name)?;
        let mut out = vec![0.0; self.vars[vi].support];
        for (code, p) in &self.atoms {
            out[self.value_of(*code, vi)] += p;
        }
        Ok(out)
    }

    /// New table with extra variables whose values are a deterministic
    /// function of each atom's existing values.
    pub fn extend_deterministic(
        &self,
        new_vars: &[(&str, usize)],
        f: impl Fn(&JointTable, u64) -> Vec<usize>,
    ) -> Result<JointTable> {
        let mut defs: Vec<(&str, usize)> = self
            .vars
            .iter()
            .map(|v| (v.name.as_str(), v.support))
            .collect();
        defs.extend_from_slice(new_vars);
        let mut out = JointTable::new(&defs)?;
        let base = self.vars.len();
        for (code, p) in &self.atoms {
            let extra = f(self, *code);
            if extra.len() != new_vars.len() {
                return Err(Error::contract("extend_deterministic arity mismatch"));
            }
            let mut new_code = *code;
            for (k, v) in extra.iter().enumerate() {
                let def = &out.vars[base + k];
                if *v >= def.support {
                    return Err(Error::contract("extend_deterministic value out of support"));
                }
                new_code |= (*v as u64) << def.shift;
            }
            out.push_mass(new_code, *p);
        }
        out.normalize_atoms();
        Ok(out)
    }

    /// New table with extra variables drawn stochastically per atom. The
    /// callback returns, for each atom and each new-variable slot, the
    /// distribution over that slot's values conditioned on the atom code
    /// and all previously assigned new slots (in order).
    pub fn extend_stochastic(
        &self,
        new_vars: &[(&str, usize)],
        cap: usize,
        f: impl Fn(&JointTable, u64, &[usize], usize) -> Vec<f64>,
    ) -> Result<JointTable> {
        let mut defs: Vec<(&str, usize)> = self
            .vars
            .iter()
            .map(|v| (v.name.as_str(), v.support))
            .collect();
        defs.extend_from_slice(new_vars);
        let mut out = JointTable::new(&defs)?;
        let base = self.vars.len();
        for (code, p) in &self.atoms {
            // Depth-first expansion over the new slots.
            let mut stack: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), *p)];
            while let Some((assigned, mass)) = stack.pop() {
                if assigned.len() == new_vars.len() {
                    let mut new_code = *code;
                    for (k, v) in assigned.iter().enumerate() {
                        new_code |= (*v as u64) << out.vars[base + k].shift;
                    }
                    out.push_mass(new_code, mass);
                    if out.atoms.len() > cap {
                        return Err(Error::Resource(format!(
                            "stochastic extension exceeds {cap} atoms"
                        )));
                    }
                    continue;
                }
                let slot = assigned.len();
                let dist = f(self, *code, &assigned, slot);
                if dist.len() != new_vars[slot].1 {
                    return Err(Error::contract("extend_stochastic distribution arity"));
                }
                for (v, q) in dist.iter().enumerate() {
                    if *q > 0.0 {
                        let mut next = assigned.clone();
                        next.push(v);
                        stack.push((next, mass * q));
                    }
                }
            }
        }
        out.normalize_atoms();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_table(p: &[(usize, usize, f64)]) -> JointTable {
        let mut t = JointTable::new(&[("x", 2), ("y", 2)]).unwrap();
        for (x, y, mass) in p {
            let code = t.pack(&[*x, *y]).unwrap();
            t.push_mass(code, *mass);
        }
        t.normalize_atoms();
        t
    }

    #[test]
    fn independent_fair_bits_have_zero_mi() {
        let t = pair_table(&[
            (0, 0, 0.25),
            (0, 1, 0.25),
            (1, 0, 0.25),
            (1, 1, 0.25),
        ]);
        let mi = t.mutual_info(&["x"], &["y"]).unwrap();
        assert!(mi.abs() < 1e-15);
    }

    #[test]
    fn copied_bit_has_ln2_mi() {
        let t = pair_table(&[(0, 0, 0.5), (1, 1, 0.5)]);
        let mi = t.mutual_info(&["x"], &["y"]).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn binary_symmetric_channel_hand_value() {
        // Flip probability 0.1 on a fair input bit:
        // I = 0.9 ln 1.8 + 0.1 ln 0.2 = 0.3680642 nats, enumerated by hand.
        let t = pair_table(&[
            (0, 0, 0.45),
            (0, 1, 0.05),
            (1, 0, 0.05),
            (1, 1, 0.45),
        ]);
        let mi = t.mutual_info(&["x"], &["y"]).unwrap();
        let expected = 0.9 * (1.8f64).ln() + 0.1 * (0.2f64).ln();
        assert!((mi - expected).abs() < 1e-12);
        assert!((mi - 0.3680642).abs() < 1e-7);
    }

    #[test]
    fn overlapping_groups_rejected() {
        let t = pair_table(&[(0, 0, 1.0)]);
        assert!(t.mutual_info(&["x"], &["x"]).is_err());
        assert!(t
            .conditional_mutual_info(&["x"], &["y"], &["x"])
            .is_err());
    }

    #[test]
    fn cmi_with_independent_conditioner_equals_mi() {
        // z independent fair bit alongside a correlated (x, y) pair.
        let mut t = JointTable::new(&[("x", 2), ("y", 2), ("z", 2)]).unwrap();
        for z in 0..2 {
            for (x, y, mass) in [(0, 0, 0.4), (0, 1, 0.1), (1, 0, 0.1), (1, 1, 0.4)] {
                let code = t.pack(&[x, y, z]).unwrap();
                t.push_mass(code, mass * 0.5);
            }
        }
        t.normalize_atoms();
        let mi = t.mutual_info(&["x"], &["y"]).unwrap();
        let cmi = t.conditional_mutual_info(&["x"], &["y"], &["z"]).unwrap();
        assert!((mi - cmi).abs() < 1e-12);
    }

    #[test]
    fn identical_bit_triple_has_zero_cmi() {
        let mut t = JointTable::new(&[("x", 2), ("y", 2), ("z", 2)]).unwrap();
        for b in 0..2 {
            let code = t.pack(&[b, b, b]).unwrap();
            t.push_mass(code, 0.5);
        }
        t.normalize_atoms();
        let cmi = t.conditional_mutual_info(&["x"], &["y"], &["z"]).unwrap();
        assert!(cmi.abs() < 1e-15);
    }

    #[test]
    fn markov_chain_with_deterministic_maps_has_zero_cmi() {
        // x fair bit, z = x, y = z: conditioning on z explains everything.
        let mut t = JointTable::new(&[("x", 2), ("z", 2), ("y", 2)]).unwrap();
        for b in 0..2 {
            let code = t.pack(&[b, b, b]).unwrap();
            t.push_mass(code, 0.5);
        }
        t.normalize_atoms();
        let cmi = t.conditional_mutual_info(&["x"], &["y"], &["z"]).unwrap();
        assert!(cmi.abs() < 1e-15);
        // And the chain-rule complement: I(x;y) = ln 2 here.
        let mi = t.mutual_info(&["x"], &["y"]).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn deterministic_extension_adds_function_vars() {
        let t = pair_table(&[(0, 1, 0.5), (1, 0, 0.5)]);
        let ext = t
            .extend_deterministic(&[("xor", 2)], |tab, code| {
                let x = tab.value_of(code, 0);
                let y = tab.value_of(code, 1);
                vec![x ^ y]
            })
            .unwrap();
        let m = ext.marginal("xor").unwrap();
        assert_eq!(m, vec![0.0, 1.0]);
    }

    #[test]
    fn code_space_overflow_rejected() {
        let defs: Vec<(String, usize)> = (0..17).map(|i| (format!("v{i}"), 16)).collect();
        let refs: Vec<(&str, usize)> = defs.iter().map(|(n, s)| (n.as_str(), *s)).collect();
        assert!(matches!(JointTable::new(&refs), Err(Error::Resource(_))));
    }
}
