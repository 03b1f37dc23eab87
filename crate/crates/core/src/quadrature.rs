//! Symmetric quadrature rules on triangles.
//!
//! Points are barycentric coordinates; weights are normalized to sum to one,
//! so a rule integrates `f` over a triangle `K` as `|K| * sum w_q f(x_q)`.

use crate::mesh::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: u32,
}

impl QuadratureRule {
    /// Edge-midpoint rule, exact for polynomials of degree 2.
    pub fn three_point() -> Self {
        Self {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }

    /// Centroid plus two symmetric orbits, exact for polynomials of degree 5.
    pub fn seven_point() -> Self {
        let s15 = 15f64.sqrt();
        let a1 = (6.0 - s15) / 21.0;
        let a2 = (6.0 + s15) / 21.0;
        let w1 = (155.0 - s15) / 1200.0;
        let w2 = (155.0 + s15) / 1200.0;
        let orbit = |a: f64| {
            let b = 1.0 - 2.0 * a;
            [[a, a, b], [a, b, a], [b, a, a]]
        };
        let mut points = vec![[1.0 / 3.0; 3]];
        points.extend(orbit(a1));
        points.extend(orbit(a2));
        let mut weights = vec![9.0 / 40.0];
        weights.extend([w1; 3]);
        weights.extend([w2; 3]);
        Self { points, weights, degree: 5 }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn barycentric(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Iterates `(physical point, barycentric coordinates, weight * area)`.
    pub fn on_triangle<'a>(
        &'a self,
        vertices: [Point; 3],
        area: f64,
    ) -> impl Iterator<Item = (Point, [f64; 3], f64)> + 'a {
        self.points.iter().zip(&self.weights).map(move |(lam, &w)| {
            let x = [
                lam[0] * vertices[0][0] + lam[1] * vertices[1][0] + lam[2] * vertices[2][0],
                lam[0] * vertices[0][1] + lam[1] * vertices[1][1] + lam[2] * vertices[2][1],
            ];
            (x, *lam, w * area)
        })
    }

    pub fn integrate(&self, vertices: [Point; 3], f: impl Fn(Point) -> f64) -> f64 {
        let area = signed_area(vertices).abs();
        self.on_triangle(vertices, area).map(|(x, _, w)| w * f(x)).sum()
    }
}

pub fn signed_area(v: [Point; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}
