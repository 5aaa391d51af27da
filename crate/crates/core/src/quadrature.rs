//! Fixed quadrature rules on the reference triangle and the unit interval.

/// Quadrature point on the reference triangle in barycentric coordinates,
/// with a weight normalised so that the weights sum to one (multiply by the
/// element area).
#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Quadrature point on `[0, 1]`, weights summing to one.
#[derive(Debug, Clone, Copy)]
pub struct LinePoint {
    pub xi: f64,
    pub weight: f64,
}

const A1: f64 = 0.101_286_507_323_456_338_8;
const B1: f64 = 0.797_426_985_353_087_322_4;
const W1: f64 = 0.125_939_180_544_827_152_6;
const A2: f64 = 0.470_142_064_105_115_089_77;
const B2: f64 = 0.059_715_871_789_769_820_459;
const W2: f64 = 0.132_394_152_788_506_180_74;

/// Symmetric 7-point rule, exact for polynomials of degree 5.
pub const TRIANGLE_7: [TriPoint; 7] = [
    TriPoint { bary: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], weight: 0.225 },
    TriPoint { bary: [A1, A1, B1], weight: W1 },
    TriPoint { bary: [A1, B1, A1], weight: W1 },
    TriPoint { bary: [B1, A1, A1], weight: W1 },
    TriPoint { bary: [A2, A2, B2], weight: W2 },
    TriPoint { bary: [A2, B2, A2], weight: W2 },
    TriPoint { bary: [B2, A2, A2], weight: W2 },
];

/// 5-point Gauss–Legendre rule on `[0, 1]`, exact for degree 9.
pub const GAUSS_5: [LinePoint; 5] = [
    LinePoint { xi: 0.046_910_077_030_668_003_601, weight: 0.118_463_442_528_094_543_76 },
    LinePoint { xi: 0.230_765_344_947_158_454_48, weight: 0.239_314_335_249_683_234_02 },
    LinePoint { xi: 0.5, weight: 0.284_444_444_444_444_444_44 },
    LinePoint { xi: 0.769_234_655_052_841_545_52, weight: 0.239_314_335_249_683_234_02 },
    LinePoint { xi: 0.953_089_922_969_331_996_4, weight: 0.118_463_442_528_094_543_76 },
];
