//! TOML netlist files.
//!
//! ```toml
//! z0_ohm = 50.0            # optional, defaults to 50
//!
//! [[element]]              # port 1 side first
//! topology = "shunt"       # series | shunt
//! kind = "RLC_S"           # R | L | C | RLC_S | RLC_P
//! r_ohm = 2.0
//! l_h = 1e-9
//! c_f = "?3e-12:1e-14:1e-10"   # free parameter: ?initial:lower:upper
//! ```
//!
//! A value written as `?initial:lower:upper` marks a free parameter for
//! circuit fitting; the netlist is simulated at `initial` until fitted.

use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use super::{Element, ElementKind, Netlist, NetworkError, Topology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetlistError {
    #[error("netlist syntax: {0}")]
    Syntax(String),
    #[error("element {element}: {message}")]
    FreeParam { element: usize, message: String },
    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: NetworkError,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("netlist has free parameters; use it as a fit template or replace `?` values")]
    UnexpectedFreeParams,
}

/// Which scalar of an element a free parameter controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamField {
    R,
    L,
    C,
}

impl ParamField {
    pub fn key(self) -> &'static str {
        match self {
            ParamField::R => "r_ohm",
            ParamField::L => "l_h",
            ParamField::C => "c_f",
        }
    }
}

/// A bounded scalar of the template that circuit fitting may adjust.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeParam {
    pub element: usize,
    pub field: ParamField,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetlist {
    #[serde(default = "default_z0")]
    z0_ohm: f64,
    #[serde(default)]
    element: Vec<RawElement>,
}

fn default_z0() -> f64 {
    50.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    topology: Topology,
    kind: ElementKind,
    r_ohm: Option<RawValue>,
    l_h: Option<RawValue>,
    c_f: Option<RawValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawValue {
    Number(f64),
    Text(String),
}

fn parse_free(text: &str) -> Result<(f64, f64, f64), String> {
    let body = text
        .trim()
        .strip_prefix('?')
        .ok_or_else(|| format!("`{text}` is neither a number nor `?initial:lower:upper`"))?;
    let parts: Vec<&str> = body.split(':').collect();
    if parts.len() != 3 {
        return Err(format!(
            "free parameter `{text}` needs explicit bounds as `?initial:lower:upper`"
        ));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("invalid number `{p}` in `{text}`"))?;
    }
    let [init, lower, upper] = v;
    if !(lower > 0.0 && lower < upper) {
        return Err(format!("bounds must satisfy 0 < lower < upper in `{text}`"));
    }
    if !(lower..=upper).contains(&init) {
        return Err(format!("initial value outside bounds in `{text}`"));
    }
    Ok((init, lower, upper))
}

/// A netlist whose elements may carry free, bounded parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetlistTemplate {
    /// Netlist with every free parameter at its initial value.
    pub netlist: Netlist,
    pub free: Vec<FreeParam>,
}

impl NetlistTemplate {
    pub fn parse(text: &str) -> Result<Self, NetlistError> {
        let raw: RawNetlist =
            toml::from_str(text).map_err(|e| NetlistError::Syntax(e.message().to_string()))?;
        let mut elements = Vec::with_capacity(raw.element.len());
        let mut free = Vec::new();
        for (index, re) in raw.element.into_iter().enumerate() {
            let mut value = |field: ParamField, v: Option<RawValue>| -> Result<Option<f64>, NetlistError> {
                match v {
                    None => Ok(None),
                    Some(RawValue::Number(x)) => Ok(Some(x)),
                    Some(RawValue::Text(t)) => {
                        let (initial, lower, upper) =
                            parse_free(&t).map_err(|message| NetlistError::FreeParam {
                                element: index,
                                message,
                            })?;
                        free.push(FreeParam {
                            element: index,
                            field,
                            initial,
                            lower,
                            upper,
                        });
                        Ok(Some(initial))
                    }
                }
            };
            let element = Element {
                topology: re.topology,
                kind: re.kind,
                r: value(ParamField::R, re.r_ohm)?,
                l: value(ParamField::L, re.l_h)?,
                c: value(ParamField::C, re.c_f)?,
            };
            element.validate().map_err(|source| NetlistError::Element {
                element: index,
                source,
            })?;
            elements.push(element);
        }
        let netlist = Netlist::new(elements, raw.z0_ohm)?;
        Ok(Self { netlist, free })
    }

    /// Copy of the netlist with free parameters set to `values`.
    pub fn instantiate(&self, values: &[f64]) -> Netlist {
        let mut n = self.netlist.clone();
        for (p, &v) in self.free.iter().zip(values) {
            let e = &mut n.elements[p.element];
            match p.field {
                ParamField::R => e.r = Some(v),
                ParamField::L => e.l = Some(v),
                ParamField::C => e.c = Some(v),
            }
        }
        n
    }

    pub fn initial_values(&self) -> Vec<f64> {
        self.free.iter().map(|p| p.initial).collect()
    }
}

/// Parses a netlist with no free parameters.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let t = NetlistTemplate::parse(text)?;
    if t.free.is_empty() {
        Ok(t.netlist)
    } else {
        Err(NetlistError::UnexpectedFreeParams)
    }
}

impl Netlist {
    pub fn parse(text: &str) -> Result<Netlist, NetlistError> {
        parse_netlist(text)
    }

    /// Serialises to the TOML netlist format. Floats use Rust's shortest
    /// round-trip representation so re-parsing is exact.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "z0_ohm = {:?}", self.z0);
        for e in &self.elements {
            let topology = match e.topology {
                Topology::Series => "series",
                Topology::Shunt => "shunt",
            };
            let _ = write!(
                out,
                "\n[[element]]\ntopology = \"{topology}\"\nkind = \"{}\"\n",
                e.kind
            );
            for (key, v) in [("r_ohm", e.r), ("l_h", e.l), ("c_f", e.c)] {
                if let Some(v) = v {
                    let _ = writeln!(out, "{key} = {v:?}");
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEMPLATE: &str = r#"
z0_ohm = 50

[[element]]
topology = "series"
kind = "R"
r_ohm = 0

[[element]]
topology = "shunt"
kind = "RLC_S"
r_ohm = "?6:0.01:100"
l_h = "?3.3e-10:1e-11:1e-7"
c_f = 3e-12
"#;

    #[test]
    fn parses_template_with_free_params() {
        let t = NetlistTemplate::parse(TEMPLATE).unwrap();
        assert_eq!(t.netlist.elements.len(), 2);
        assert_eq!(t.free.len(), 2);
        assert_eq!(t.free[0].field, ParamField::R);
        assert_eq!(t.free[0].element, 1);
        assert_eq!((t.free[0].lower, t.free[0].upper), (0.01, 100.0));
        assert_eq!(t.netlist.elements[1].r, Some(6.0));
        let n = t.instantiate(&[2.0, 1e-9]);
        assert_eq!(n.elements[1].r, Some(2.0));
        assert_eq!(n.elements[1].l, Some(1e-9));
    }

    #[test]
    fn fixed_netlist_round_trips() {
        let t = NetlistTemplate::parse(TEMPLATE).unwrap();
        let n = t.instantiate(&[2.5, 1.25e-9]);
        let back = Netlist::parse(&n.to_toml()).unwrap();
        assert_eq!(back, n);
    }

    #[test]
    fn rejects_free_params_in_plain_netlist() {
        assert_eq!(Netlist::parse(TEMPLATE), Err(NetlistError::UnexpectedFreeParams));
    }

    #[test]
    fn schema_errors() {
        let unbounded = "[[element]]\ntopology = \"series\"\nkind = \"L\"\nl_h = \"?1e-9\"\n";
        assert!(matches!(
            NetlistTemplate::parse(unbounded),
            Err(NetlistError::FreeParam { element: 0, .. })
        ));
        let inverted = "[[element]]\ntopology = \"series\"\nkind = \"L\"\nl_h = \"?1e-9:1e-8:1e-10\"\n";
        assert!(NetlistTemplate::parse(inverted).is_err());
        let outside = "[[element]]\ntopology = \"series\"\nkind = \"L\"\nl_h = \"?1:1e-10:1e-8\"\n";
        assert!(NetlistTemplate::parse(outside).is_err());
        let bad_kind = "[[element]]\ntopology = \"series\"\nkind = \"Q\"\nr_ohm = 1\n";
        assert!(matches!(
            NetlistTemplate::parse(bad_kind),
            Err(NetlistError::Syntax(_))
        ));
        let wrong_value = "[[element]]\ntopology = \"series\"\nkind = \"R\"\nl_h = 1e-9\n";
        assert!(matches!(
            NetlistTemplate::parse(wrong_value),
            Err(NetlistError::Element { element: 0, .. })
        ));
        assert!(matches!(
            NetlistTemplate::parse("z0_ohm = 50\n"),
            Err(NetlistError::Network(NetworkError::EmptyNetlist))
        ));
        let unknown = "[[element]]\ntopology = \"series\"\nkind = \"R\"\nr_ohm = 1\nfoo = 2\n";
        assert!(NetlistTemplate::parse(unknown).is_err());
    }
}
