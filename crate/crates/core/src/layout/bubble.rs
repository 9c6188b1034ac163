//! Risk portfolio: probability on x, importance on y, damage as bubble area.

use serde::{Deserialize, Serialize};

use super::color::{color_scale, Rgb};
use super::LayoutError;
use crate::model::Risk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Quadrant {
    /// low probability, low importance
    Accept,
    /// high probability, low importance
    Watch,
    /// low probability, high importance
    Prevent,
    /// high probability, high importance
    Mitigate,
}

impl Quadrant {
    pub fn color(self) -> Rgb {
        match self {
            Quadrant::Accept => color_scale(0.0),
            Quadrant::Watch => color_scale(0.5),
            Quadrant::Prevent => color_scale(0.75),
            Quadrant::Mitigate => color_scale(1.0),
        }
    }

    pub const ALL: [Quadrant; 4] =
        [Quadrant::Accept, Quadrant::Watch, Quadrant::Prevent, Quadrant::Mitigate];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub r_max: f64,
    pub probability_split: f64,
    pub importance_split: f64,
}

impl Default for BubbleParams {
    fn default() -> Self {
        Self { r_max: 0.08, probability_split: 0.5, importance_split: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleItem {
    pub risk: String,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub damage: f64,
    pub color: Rgb,
    pub quadrant: Quadrant,
    #[serde(default)]
    pub actions: Vec<String>,
}

/// Radius floor, relative to `r_max`, for risks without damage so that
/// every bubble stays visible.
pub const MIN_RADIUS_FRACTION: f64 = 1e-3;

pub fn quadrant(x: f64, y: f64, params: &BubbleParams) -> Quadrant {
    match (x >= params.probability_split, y >= params.importance_split) {
        (false, false) => Quadrant::Accept,
        (true, false) => Quadrant::Watch,
        (false, true) => Quadrant::Prevent,
        (true, true) => Quadrant::Mitigate,
    }
}

pub fn bubble_portfolio(risks: &[Risk], params: &BubbleParams) -> Result<Vec<BubbleItem>, LayoutError> {
    if !(params.r_max > 0.0) {
        return Err(LayoutError::InvalidInput("r_max must be positive".into()));
    }
    for r in risks {
        r.validate().map_err(|e| LayoutError::InvalidInput(e.to_string()))?;
    }
    let max_damage = risks.iter().map(|r| r.damage).fold(0.0, f64::max);
    Ok(risks
        .iter()
        .map(|risk| {
            let r = if max_damage > 0.0 {
                (params.r_max * (risk.damage / max_damage).sqrt())
                    .max(params.r_max * MIN_RADIUS_FRACTION)
            } else {
                params.r_max
            };
            let q = quadrant(risk.probability, risk.importance, params);
            BubbleItem {
                risk: risk.id.clone(),
                name: risk.name.clone(),
                x: risk.probability,
                y: risk.importance,
                r,
                damage: risk.damage,
                color: q.color(),
                quadrant: q,
                actions: Vec::new(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn risk(id: &str, p: f64, i: f64, damage: f64) -> Risk {
        Risk { id: id.into(), name: id.into(), probability: p, importance: i, damage }
    }

    #[test]
    fn boundary_is_mitigate() {
        let b = bubble_portfolio(&[risk("r", 0.5, 0.5, 1.0)], &BubbleParams::default()).unwrap();
        assert_eq!(b[0].quadrant, Quadrant::Mitigate);
        assert_eq!((b[0].x, b[0].y), (0.5, 0.5));
    }

    #[test]
    fn quadrants() {
        let p = BubbleParams::default();
        assert_eq!(quadrant(0.1, 0.1, &p), Quadrant::Accept);
        assert_eq!(quadrant(0.9, 0.1, &p), Quadrant::Watch);
        assert_eq!(quadrant(0.1, 0.9, &p), Quadrant::Prevent);
        assert_eq!(quadrant(0.9, 0.9, &p), Quadrant::Mitigate);
    }

    #[test]
    fn sqrt_radius_scaling() {
        let b = bubble_portfolio(&[risk("a", 0.1, 0.1, 1.0), risk("b", 0.1, 0.1, 4.0)], &BubbleParams::default())
            .unwrap();
        assert!((b[1].r / b[0].r - 2.0).abs() < 1e-12);
        assert_eq!(b[1].r, 0.08);
    }

    #[test]
    fn equal_damage_gives_max_radius() {
        let b = bubble_portfolio(&[risk("a", 0.1, 0.1, 3.0), risk("b", 0.7, 0.1, 3.0)], &BubbleParams::default())
            .unwrap();
        assert!(b.iter().all(|x| x.r == 0.08));
        let zero = bubble_portfolio(&[risk("a", 0.1, 0.1, 0.0)], &BubbleParams::default()).unwrap();
        assert_eq!(zero[0].r, 0.08);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(bubble_portfolio(&[], &BubbleParams::default()).unwrap().is_empty());
        assert!(bubble_portfolio(&[risk("a", 1.5, 0.1, 1.0)], &BubbleParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn area_proportional_to_damage(ds in proptest::collection::vec(1f64..1e5, 2..20)) {
            let risks: Vec<_> = ds.iter().enumerate().map(|(i, d)| risk(&i.to_string(), 0.3, 0.3, *d)).collect();
            let b = bubble_portfolio(&risks, &BubbleParams::default()).unwrap();
            for i in 0..b.len() {
                for j in 0..b.len() {
                    let lhs = (b[i].r * b[i].r) / (b[j].r * b[j].r);
                    let rhs = ds[i] / ds[j];
                    prop_assert!((lhs / rhs - 1.0).abs() <= 1e-9);
                }
                prop_assert!(b[i].r <= 0.08 && b[i].r > 0.0);
            }
        }
    }
}
