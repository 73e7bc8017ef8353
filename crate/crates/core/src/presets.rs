//! The three benchmark configurations: medium, initial displacement and
//! initial velocity for each test case.
//!
//! Test 1 is a homogeneous isotropic medium with elliptical inclusions,
//! test 2 a smoothly varying isotropic medium with elliptical and
//! rectangular inclusions, test 3 a constant fully anisotropic medium with
//! ring and slab inclusions. All inclusions are sampled pointwise at grid
//! nodes with no mollification.

use crate::elasticity::{
    make_anisotropic_flat, make_isotropic, make_isotropic_varying, ElasticityField,
    ElasticityError, SpatialGrid, VectorField,
};
use crate::forward::InitialData;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCase {
    Test1,
    Test2,
    Test3,
}

impl TestCase {
    pub fn from_id(id: u32) -> Option<TestCase> {
        match id {
            1 => Some(TestCase::Test1),
            2 => Some(TestCase::Test2),
            3 => Some(TestCase::Test3),
            _ => None,
        }
    }

    pub fn id(self) -> u32 {
        match self {
            TestCase::Test1 => 1,
            TestCase::Test2 => 2,
            TestCase::Test3 => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TestCase::Test1 => "test1",
            TestCase::Test2 => "test2",
            TestCase::Test3 => "test3",
        }
    }

    pub fn from_label(s: &str) -> Option<TestCase> {
        match s {
            "test1" => Some(TestCase::Test1),
            "test2" => Some(TestCase::Test2),
            "test3" => Some(TestCase::Test3),
            _ => None,
        }
    }

    pub fn medium(self) -> Result<ElasticityField, ElasticityError> {
        match self {
            TestCase::Test1 => make_isotropic(1.0, 2.0),
            TestCase::Test2 => Ok(make_isotropic_varying(
                |x, y| 1.0 + (-0.5 * (x * x + y * y)).exp(),
                |x, y| 2.0 + (x * y).sin(),
            )),
            TestCase::Test3 => make_anisotropic_flat([
                [80.0, 5.0, 5.0, 30.0],
                [5.0, 20.0, 20.0, 0.0],
                [5.0, 20.0, 20.0, 0.0],
                [30.0, 0.0, 0.0, 40.0],
            ]),
        }
    }

    /// True initial displacement components as point functions.
    pub fn displacement_fn(self) -> fn(f64, f64) -> [f64; 2] {
        match self {
            TestCase::Test1 => |x, y| {
                [
                    ind(3.0 * sq(x - 0.5) + y * y <= 0.36, 1.0),
                    ind(x * x + 3.0 * sq(y - 0.5) <= 0.36, 1.0),
                ]
            },
            TestCase::Test2 => |x, y| {
                [
                    ind(3.0 * sq(x + 0.3) + 15.0 * sq(y - 0.3) < 0.64, 2.0),
                    ind(18.0 * sq(x - 0.3) + 4.0 * y * y < 1.0, 2.0),
                ]
            },
            TestCase::Test3 => |x, y| {
                let ellipse = 2.0 * x * x + 13.0 * sq(y + 0.6) < 0.49;
                let slab = 2.0 * sq(x + 0.5) < 0.09 && sq(y - 0.5) < 0.09;
                [
                    ind(8.0 * x * x + 2.0 * y * y < 0.25, 1.0),
                    ind(ellipse || slab, 1.0),
                ]
            },
        }
    }

    /// True initial velocity components as point functions.
    pub fn velocity_fn(self) -> fn(f64, f64) -> [f64; 2] {
        match self {
            TestCase::Test1 => |x, y| {
                [
                    ind(3.0 * sq(x - 0.5) + y * y <= 0.36, 30.0),
                    ind(x * x + 3.0 * sq(y + 0.4) <= 0.09, 30.0),
                ]
            },
            TestCase::Test2 => |x, y| {
                [
                    ind((18.0 * sq(x - 0.5)).max(4.0 * y * y) < 1.0, 20.0),
                    ind((15.0 * sq(x + y + 0.3)).max(4.0 * y * y) < 1.0, 20.0),
                ]
            },
            TestCase::Test3 => |x, y| {
                let r2 = x * x + y * y;
                [
                    ind(0.25 < r2 && r2 < 0.64, 40.0),
                    ind(sq(x + y).max(20.0 * sq(x - y)) < 1.0, 40.0),
                ]
            },
        }
    }

    /// Initial data sampled on a simulation grid.
    pub fn initial_data(self, grid: &SpatialGrid) -> InitialData {
        let p = self.displacement_fn();
        let q = self.velocity_fn();
        InitialData::new(
            VectorField::from_fn(grid, p),
            VectorField::from_fn(grid, q),
            self.label(),
        )
    }

    /// Reference maximum-value relative errors reported for this case, in
    /// percent, ordered `p1, p2, q1, q2`.
    pub fn reference_errors_percent(self) -> [f64; 4] {
        match self {
            TestCase::Test1 => [5.37, 5.63, 4.03, 9.87],
            TestCase::Test2 => [3.28, 0.5, 19.93, 11.96],
            TestCase::Test3 => [2.14, 4.18, 1.35, 1.71],
        }
    }
}

fn sq(v: f64) -> f64 {
    v * v
}

fn ind(cond: bool, amplitude: f64) -> f64 {
    if cond {
        amplitude
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn test1_inclusion_membership() {
        let p = TestCase::Test1.displacement_fn();
        let q = TestCase::Test1.velocity_fn();
        assert_eq!(p(0.5, 0.0), [1.0, 0.0]);
        assert_eq!(p(0.0, 0.5), [0.0, 1.0]);
        assert_eq!(q(0.5, 0.0)[0], 30.0);
        assert_eq!(q(0.0, -0.4)[1], 30.0);
        assert_eq!(p(-0.9, -0.9), [0.0, 0.0]);
    }

    #[test]
    fn test3_union_inclusion() {
        let p = TestCase::Test3.displacement_fn();
        // inside the ellipse part
        assert_eq!(p(0.0, -0.6)[1], 1.0);
        // inside the slab part
        assert_eq!(p(-0.5, 0.5)[1], 1.0);
        // outside both
        assert_eq!(p(0.9, 0.0)[1], 0.0);
        let q = TestCase::Test3.velocity_fn();
        // ring: between radii 0.5 and 0.8
        assert_eq!(q(0.6, 0.0)[0], 40.0);
        assert_eq!(q(0.2, 0.0)[0], 0.0);
        assert_eq!(q(0.9, 0.0)[0], 0.0);
    }

    #[test]
    fn media_are_coercive_on_the_simulation_grid() {
        let grid = SpatialGrid::square(-3.0, 3.0, 61).unwrap();
        for case in [TestCase::Test1, TestCase::Test2, TestCase::Test3] {
            let lam = case.medium().unwrap().validate(&grid).unwrap();
            assert!(lam > 0.0, "{} not coercive", case.label());
        }
    }

    #[test]
    fn initial_data_clears_the_outer_boundary() {
        let grid = SpatialGrid::square(-3.0, 3.0, 121).unwrap();
        for case in [TestCase::Test1, TestCase::Test2, TestCase::Test3] {
            let init = case.initial_data(&grid);
            assert!(
                init.margin_to_boundary(&grid) > 30,
                "{} support too close to the wall",
                case.label()
            );
        }
    }

    #[test]
    fn test2_velocity_at_origin_matches_formulas() {
        // mu(0,0) = 2, lambda(0,0) = 2
        let medium = TestCase::Test2.medium().unwrap();
        let c = medium.stiffness_at(0.0, 0.0);
        assert_abs_diff_eq!(c[0][1][0][1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[0][0][1][1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[0][0][0][0], 2.0 + 2.0 * 2.0, epsilon = 1e-15);
    }
}
