//! Rectangle elements for mid-surface fields.
//!
//! Local coordinates `s, t ∈ [0,1]` on an element of size `hx × hy`; corners are
//! counter-clockwise from the lower-left one.

/// Corner offsets `(cx, cy)` of the counter-clockwise rectangle.
pub const QUAD_CORNERS: [[usize; 2]; 4] = [[0, 0], [1, 0], [1, 1], [0, 1]];

/// Bilinear values and physical gradients.
pub fn bilinear(h: [f64; 2], s: [f64; 2]) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (a, c) in QUAD_CORNERS.iter().enumerate() {
        let fx = if c[0] == 1 { s[0] } else { 1.0 - s[0] };
        let fy = if c[1] == 1 { s[1] } else { 1.0 - s[1] };
        let dx = if c[0] == 1 { 1.0 } else { -1.0 } / h[0];
        let dy = if c[1] == 1 { 1.0 } else { -1.0 } / h[1];
        n[a] = fx * fy;
        dn[a] = [dx * fy, fx * dy];
    }
    (n, dn)
}

/// Cubic Hermite functions on `[0, a]`: value and slope at each end.
/// Returns `[value, d/dx, d²/dx²]` for the four functions.
fn hermite(a: f64, s: f64) -> [[f64; 3]; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        [1.0 - 3.0 * s2 + 2.0 * s3, (-6.0 * s + 6.0 * s2) / a, (-6.0 + 12.0 * s) / (a * a)],
        [a * (s - 2.0 * s2 + s3), 1.0 - 4.0 * s + 3.0 * s2, (-4.0 + 6.0 * s) / a],
        [3.0 * s2 - 2.0 * s3, (6.0 * s - 6.0 * s2) / a, (6.0 - 12.0 * s) / (a * a)],
        [a * (-s2 + s3), -2.0 * s + 3.0 * s2, (-2.0 + 6.0 * s) / a],
    ]
}

/// Values and derivatives of the 16 C1 rectangle shape functions.
///
/// Dofs are ordered per corner as `[w, ∂x w, ∂y w, ∂xy w]`.
#[derive(Clone, Debug)]
pub struct BfsValues {
    pub n: [f64; 16],
    pub dx: [f64; 16],
    pub dy: [f64; 16],
    pub dxx: [f64; 16],
    pub dyy: [f64; 16],
    pub dxy: [f64; 16],
}

pub fn bfs(h: [f64; 2], s: [f64; 2]) -> BfsValues {
    let hx = hermite(h[0], s[0]);
    let hy = hermite(h[1], s[1]);
    let mut v = BfsValues { n: [0.0; 16], dx: [0.0; 16], dy: [0.0; 16], dxx: [0.0; 16], dyy: [0.0; 16], dxy: [0.0; 16] };
    for (a, c) in QUAD_CORNERS.iter().enumerate() {
        // value and slope function indices for this corner
        let (vx, sx) = if c[0] == 0 { (0, 1) } else { (2, 3) };
        let (vy, sy) = if c[1] == 0 { (0, 1) } else { (2, 3) };
        let pairs = [(vx, vy), (sx, vy), (vx, sy), (sx, sy)];
        for (k, &(fx, fy)) in pairs.iter().enumerate() {
            let i = 4 * a + k;
            let (x, y) = (hx[fx], hy[fy]);
            v.n[i] = x[0] * y[0];
            v.dx[i] = x[1] * y[0];
            v.dy[i] = x[0] * y[1];
            v.dxx[i] = x[2] * y[0];
            v.dyy[i] = x[0] * y[2];
            v.dxy[i] = x[1] * y[1];
        }
    }
    v
}

/// Nodal C1 dofs `[w, ∂x w, ∂y w, ∂xy w]` of a smooth function.
pub fn bfs_interpolant(f: impl Fn([f64; 2]) -> [f64; 4], corners: [[f64; 2]; 4]) -> [f64; 16] {
    let mut d = [0.0; 16];
    for (a, x) in corners.iter().enumerate() {
        d[4 * a..4 * a + 4].copy_from_slice(&f(*x));
    }
    d
}
