//! Small 3-vector helpers shared by the structure and hydrogen-bond code.

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Angle at `vertex` between the rays towards `a` and `b`, in degrees.
pub fn angle_deg(a: Vec3, vertex: Vec3, b: Vec3) -> f64 {
    let u = sub(a, vertex);
    let v = sub(b, vertex);
    let denom = norm(u) * norm(v);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(u, v) / denom).clamp(-1.0, 1.0).acos().to_degrees()
}
