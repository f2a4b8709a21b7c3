//! Two-material fabric parameters.

use std::fmt::Write as _;
use std::path::Path;

use ini::Ini;

use crate::error::{Error, Result};

/// Lamé pair (Pa).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lame {
    pub mu: f64,
    pub lambda: f64,
}

impl Lame {
    /// Plane-stress conversion for a thin membrane.
    pub fn plane_stress(young: f64, poisson: f64) -> Self {
        Lame {
            mu: young / (2.0 * (1.0 + poisson)),
            lambda: young * poisson / (1.0 - poisson * poisson),
        }
    }
}

/// Reinforced cloth (material 1) and base cloth (material 2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialPair {
    /// Young's modulus of reinforced cloth (Pa).
    pub e1: f64,
    /// Young's modulus of cloth (Pa).
    pub e2: f64,
    pub nu: f64,
    /// Reinforced thickness (m).
    pub t1: f64,
    /// Cloth thickness (m).
    pub t2: f64,
    /// Attachment spring stiffness relative to `e2 * t2`.
    pub attach_k: f64,
}

impl Default for MaterialPair {
    /// Measured heat-transfer-vinyl reinforced knit and its base fabric.
    fn default() -> Self {
        MaterialPair {
            e1: 5.7e6,
            e2: 0.5e6,
            nu: 0.33,
            t1: 0.35e-3,
            t2: 0.27e-3,
            attach_k: 0.002,
        }
    }
}

impl MaterialPair {
    pub fn validate(&self) -> Result<()> {
        let ok = self.e1 > self.e2
            && self.e2 > 0.0
            && (0.0..0.5).contains(&self.nu)
            && self.t1 >= self.t2
            && self.t2 > 0.0
            && self.attach_k >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "material parameters violate E1 > E2 > 0, 0 <= nu < 0.5, t1 >= t2 > 0: {self:?}"
            )))
        }
    }

    pub fn lame(&self, reinforced: bool) -> Lame {
        Lame::plane_stress(if reinforced { self.e1 } else { self.e2 }, self.nu)
    }

    pub fn thickness(&self, reinforced: bool) -> f64 {
        if reinforced {
            self.t1
        } else {
            self.t2
        }
    }

    /// Base-fabric membrane stiffness `E2 * t2` (N/m).
    pub fn base_stiffness(&self) -> f64 {
        self.e2 * self.t2
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `key = value` lines (`E1_pa`, `E2_pa`, `nu`, `t1_m`, `t2_m`,
    /// `attach_k`); missing keys keep their defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let mut m = MaterialPair::default();
        for (section, props) in ini.iter() {
            if let Some(s) = section {
                return Err(Error::parse(path, 0, format!("unexpected section [{s}]")));
            }
            for (key, value) in props.iter() {
                let v: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, 0, format!("bad number for {key}: '{value}'")))?;
                match key {
                    "E1_pa" => m.e1 = v,
                    "E2_pa" => m.e2 = v,
                    "nu" => m.nu = v,
                    "t1_m" => m.t1 = v,
                    "t2_m" => m.t2 = v,
                    "attach_k" => m.attach_k = v,
                    other => return Err(Error::parse(path, 0, format!("unknown key '{other}'"))),
                }
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "E1_pa = {}", self.e1);
        let _ = writeln!(s, "E2_pa = {}", self.e2);
        let _ = writeln!(s, "nu = {}", self.nu);
        let _ = writeln!(s, "t1_m = {}", self.t1);
        let _ = writeln!(s, "t2_m = {}", self.t2);
        let _ = writeln!(s, "attach_k = {}", self.attach_k);
        s
    }
}
