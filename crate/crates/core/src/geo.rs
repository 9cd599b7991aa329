//! Geodetic and projective primitives.
//!
//! * WGS-84 direct and inverse geodesic problem (Vincenty's series solution)
//! * origin-relative spherical Mercator
//! * pinhole projection `pixel = (1/Z) K_in K_ex [U V W 1]^T`
//!
//! World frame convention used by [`CameraModel::world_from_mercator`]: `U` is the Mercator
//! east offset, `W` the Mercator north offset and `V` the elevation relative to the camera
//! (water plane at `V = -camera_height`).

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// WGS-84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// Sphere radius used by the Mercator projection.
pub const MERCATOR_RADIUS: f64 = 6_378_137.0;
/// Latitude magnitude beyond which Mercator is refused.
pub const MERCATOR_MAX_LAT: f64 = 85.05;

const VINCENTY_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T = f64> {
    pub lon: T,
    pub lat: T,
}

impl<T: Scalar> GeoPoint<T> {
    /// Validated constructor; longitude is wrapped into `[-180, 180)`.
    pub fn new(lon: T, lat: T) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::invalid("geo point must be finite"));
        }
        if lat.abs() > T::lit(90.0) {
            return Err(Error::OutOfDomain(format!("latitude {lat} outside [-90, 90]")));
        }
        Ok(Self {
            lon: normalize_lon(lon),
            lat,
        })
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && self.lat.abs() <= T::lit(90.0)
            && self.lon.abs() <= T::lit(180.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint<T = f64> {
    pub u: T,
    pub v: T,
    pub w: T,
}

impl<T: Scalar> WorldPoint<T> {
    pub fn new(u: T, v: T, w: T) -> Self {
        Self { u, v, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> PixelPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned pixel rectangle given by its top-left and bottom-right corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T = f64> {
    pub x_tl: T,
    pub y_tl: T,
    pub x_br: T,
    pub y_br: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x_tl: T, y_tl: T, x_br: T, y_br: T) -> Result<Self> {
        let r = Self { x_tl, y_tl, x_br, y_br };
        if !r.is_valid() {
            return Err(Error::invalid(format!(
                "invalid rectangle ({x_tl}, {y_tl}) - ({x_br}, {y_br})"
            )));
        }
        Ok(r)
    }

    pub fn is_valid(&self) -> bool {
        [self.x_tl, self.y_tl, self.x_br, self.y_br].iter().all(|v| v.is_finite())
            && self.x_tl < self.x_br
            && self.y_tl < self.y_br
    }

    pub fn width(&self) -> T {
        self.x_br - self.x_tl
    }

    pub fn height(&self) -> T {
        self.y_br - self.y_tl
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> PixelPoint<T> {
        let two = T::lit(2.0);
        PixelPoint::new((self.x_tl + self.x_br) / two, (self.y_tl + self.y_br) / two)
    }

    pub fn bottom_center(&self) -> PixelPoint<T> {
        PixelPoint::new((self.x_tl + self.x_br) / T::lit(2.0), self.y_br)
    }

    pub fn contains_point(&self, p: PixelPoint<T>) -> bool {
        p.x >= self.x_tl && p.x <= self.x_br && p.y >= self.y_tl && p.y <= self.y_br
    }

    pub fn contains(&self, other: &Self) -> bool {
        other.x_tl >= self.x_tl && other.y_tl >= self.y_tl && other.x_br <= self.x_br && other.y_br <= self.y_br
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x_br.min(other.x_br) - self.x_tl.max(other.x_tl);
        let h = self.y_br.min(other.y_br) - self.y_tl.max(other.y_tl);
        if w > T::zero() && h > T::zero() {
            w * h
        } else {
            T::zero()
        }
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union > T::zero() {
            inter / union
        } else {
            T::zero()
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            x_tl: self.x_tl.min(other.x_tl),
            y_tl: self.y_tl.min(other.y_tl),
            x_br: self.x_br.max(other.x_br),
            y_br: self.y_br.max(other.y_br),
        }
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            x_tl: self.x_tl + dx,
            y_tl: self.y_tl + dy,
            x_br: self.x_br + dx,
            y_br: self.y_br + dy,
        }
    }

    /// Smallest rectangle enclosing all points, `None` for an empty or degenerate set.
    pub fn envelope(points: &[PixelPoint<T>]) -> Option<Self> {
        let first = points.first()?;
        let mut r = Self {
            x_tl: first.x,
            y_tl: first.y,
            x_br: first.x,
            y_br: first.y,
        };
        for p in &points[1..] {
            r.x_tl = r.x_tl.min(p.x);
            r.y_tl = r.y_tl.min(p.y);
            r.x_br = r.x_br.max(p.x);
            r.y_br = r.y_br.max(p.y);
        }
        r.is_valid().then_some(r)
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn normalize_lon<T: Scalar>(lon: T) -> T {
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    if lon >= -half && lon < half {
        return lon;
    }
    let wrapped = (lon + half) % full;
    if wrapped < T::zero() {
        wrapped + full - half
    } else {
        wrapped - half
    }
}

fn normalize_course<T: Scalar>(course: T) -> T {
    let full = T::lit(360.0);
    let c = course % full;
    if c < T::zero() {
        c + full
    } else {
        c
    }
}

/// Destination reached after travelling `distance` meters from `origin` along the geodesic
/// leaving at `course` degrees clockwise from north, on the WGS-84 ellipsoid.
pub fn forward_geodetic<T: Scalar>(origin: GeoPoint<T>, course: T, distance: T) -> Result<GeoPoint<T>> {
    if !origin.lon.is_finite() || !origin.lat.is_finite() || !course.is_finite() || !distance.is_finite() {
        return Err(Error::invalid("forward geodetic inputs must be finite"));
    }
    if distance < T::zero() {
        return Err(Error::invalid(format!("negative distance {distance}")));
    }
    if distance == T::zero() {
        return GeoPoint::new(origin.lon, origin.lat);
    }

    let a = T::lit(WGS84_A);
    let f = T::lit(WGS84_F);
    let one = T::one();
    let two = T::lit(2.0);
    let b = a * (one - f);

    let alpha1 = normalize_course(course).to_radians();
    let (sin_alpha1, cos_alpha1) = alpha1.sin_cos();
    let tan_u1 = (one - f) * origin.lat.to_radians().tan();
    let cos_u1 = one / (one + tan_u1 * tan_u1).sqrt();
    let sin_u1 = tan_u1 * cos_u1;
    let sigma1 = tan_u1.atan2(cos_alpha1);
    let sin_alpha = cos_u1 * sin_alpha1;
    let cos_sq_alpha = one - sin_alpha * sin_alpha;
    let u_sq = cos_sq_alpha * (a * a - b * b) / (b * b);
    let big_a = one
        + u_sq / T::lit(16384.0)
            * (T::lit(4096.0) + u_sq * (T::lit(-768.0) + u_sq * (T::lit(320.0) - T::lit(175.0) * u_sq)));
    let big_b = u_sq / T::lit(1024.0)
        * (T::lit(256.0) + u_sq * (T::lit(-128.0) + u_sq * (T::lit(74.0) - T::lit(47.0) * u_sq)));

    let sigma0 = distance / (b * big_a);
    let mut sigma = sigma0;
    let tol = T::lit(1e-14).max(T::epsilon());
    let mut cos_2sigma_m;
    let mut sin_sigma;
    let mut cos_sigma;
    let mut iter = 0;
    loop {
        cos_2sigma_m = (two * sigma1 + sigma).cos();
        sin_sigma = sigma.sin();
        cos_sigma = sigma.cos();
        let c2 = cos_2sigma_m * cos_2sigma_m;
        let delta_sigma = big_b
            * sin_sigma
            * (cos_2sigma_m
                + big_b / T::lit(4.0)
                    * (cos_sigma * (-one + two * c2)
                        - big_b / T::lit(6.0)
                            * cos_2sigma_m
                            * (T::lit(-3.0) + T::lit(4.0) * sin_sigma * sin_sigma)
                            * (T::lit(-3.0) + T::lit(4.0) * c2)));
        let next = sigma0 + delta_sigma;
        let done = (next - sigma).abs() <= tol;
        sigma = next;
        iter += 1;
        if done || iter >= VINCENTY_MAX_ITER {
            break;
        }
    }
    cos_2sigma_m = (two * sigma1 + sigma).cos();
    sin_sigma = sigma.sin();
    cos_sigma = sigma.cos();

    let x = sin_u1 * sin_sigma - cos_u1 * cos_sigma * cos_alpha1;
    let lat2 = (sin_u1 * cos_sigma + cos_u1 * sin_sigma * cos_alpha1)
        .atan2((one - f) * (sin_alpha * sin_alpha + x * x).sqrt());
    let lambda = (sin_sigma * sin_alpha1).atan2(cos_u1 * cos_sigma - sin_u1 * sin_sigma * cos_alpha1);
    let c = f / T::lit(16.0) * cos_sq_alpha * (T::lit(4.0) + f * (T::lit(4.0) - T::lit(3.0) * cos_sq_alpha));
    let l = lambda
        - (one - c)
            * f
            * sin_alpha
            * (sigma
                + c * sin_sigma
                    * (cos_2sigma_m + c * cos_sigma * (-one + two * cos_2sigma_m * cos_2sigma_m)));

    GeoPoint::new(origin.lon + l.to_degrees(), lat2.to_degrees())
}

/// Result of the inverse geodesic problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverse<T> {
    pub distance: T,
    /// Forward azimuth at the first point, degrees in `[0, 360)`.
    pub azimuth: T,
}

/// Geodesic distance and initial azimuth between two points on WGS-84.
///
/// Fails to converge only for nearly antipodal points, which is reported as out-of-domain.
pub fn inverse_geodetic<T: Scalar>(from: GeoPoint<T>, to: GeoPoint<T>) -> Result<Inverse<T>> {
    if !from.is_valid() || !to.is_valid() {
        return Err(Error::invalid("inverse geodetic inputs must be valid geo points"));
    }
    let a = T::lit(WGS84_A);
    let f = T::lit(WGS84_F);
    let one = T::one();
    let two = T::lit(2.0);
    let b = a * (one - f);

    let l = normalize_lon(to.lon - from.lon).to_radians();
    let u1 = ((one - f) * from.lat.to_radians().tan()).atan();
    let u2 = ((one - f) * to.lat.to_radians().tan()).atan();
    let (sin_u1, cos_u1) = u1.sin_cos();
    let (sin_u2, cos_u2) = u2.sin_cos();

    let mut lambda = l;
    let tol = T::lit(1e-13).max(T::epsilon() * T::lit(4.0));
    let mut converged = false;
    let (mut sin_sigma, mut cos_sigma, mut sigma) = (T::zero(), one, T::zero());
    let (mut cos_sq_alpha, mut cos_2sigma_m) = (one, T::zero());
    let (mut sin_lambda, mut cos_lambda) = (T::zero(), one);
    for _ in 0..VINCENTY_MAX_ITER {
        (sin_lambda, cos_lambda) = lambda.sin_cos();
        let t1 = cos_u2 * sin_lambda;
        let t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda;
        sin_sigma = (t1 * t1 + t2 * t2).sqrt();
        if sin_sigma == T::zero() {
            return Ok(Inverse {
                distance: T::zero(),
                azimuth: T::zero(),
            });
        }
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
        cos_sq_alpha = one - sin_alpha * sin_alpha;
        cos_2sigma_m = if cos_sq_alpha != T::zero() {
            cos_sigma - two * sin_u1 * sin_u2 / cos_sq_alpha
        } else {
            T::zero()
        };
        let c = f / T::lit(16.0) * cos_sq_alpha * (T::lit(4.0) + f * (T::lit(4.0) - T::lit(3.0) * cos_sq_alpha));
        let prev = lambda;
        lambda = l
            + (one - c)
                * f
                * sin_alpha
                * (sigma
                    + c * sin_sigma
                        * (cos_2sigma_m + c * cos_sigma * (-one + two * cos_2sigma_m * cos_2sigma_m)));
        if (lambda - prev).abs() <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::OutOfDomain("inverse geodesic did not converge (near-antipodal points)".into()));
    }

    let u_sq = cos_sq_alpha * (a * a - b * b) / (b * b);
    let big_a = one
        + u_sq / T::lit(16384.0)
            * (T::lit(4096.0) + u_sq * (T::lit(-768.0) + u_sq * (T::lit(320.0) - T::lit(175.0) * u_sq)));
    let big_b = u_sq / T::lit(1024.0)
        * (T::lit(256.0) + u_sq * (T::lit(-128.0) + u_sq * (T::lit(74.0) - T::lit(47.0) * u_sq)));
    let c2 = cos_2sigma_m * cos_2sigma_m;
    let delta_sigma = big_b
        * sin_sigma
        * (cos_2sigma_m
            + big_b / T::lit(4.0)
                * (cos_sigma * (-one + two * c2)
                    - big_b / T::lit(6.0)
                        * cos_2sigma_m
                        * (T::lit(-3.0) + T::lit(4.0) * sin_sigma * sin_sigma)
                        * (T::lit(-3.0) + T::lit(4.0) * c2)));
    let distance = b * big_a * (sigma - delta_sigma);
    let azimuth = (cos_u2 * sin_lambda).atan2(cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda);
    Ok(Inverse {
        distance,
        azimuth: normalize_course(azimuth.to_degrees()),
    })
}

fn mercator_y<T: Scalar>(lat: T) -> T {
    let quarter = T::FRAC_PI_4();
    T::lit(MERCATOR_RADIUS) * (quarter + lat.to_radians() / T::lit(2.0)).tan().ln()
}

fn check_mercator_lat<T: Scalar>(p: &GeoPoint<T>) -> Result<()> {
    if !p.is_valid() {
        return Err(Error::invalid("mercator input must be a valid geo point"));
    }
    if p.lat.abs() >= T::lit(MERCATOR_MAX_LAT) {
        return Err(Error::OutOfDomain(format!(
            "latitude {} beyond mercator limit {MERCATOR_MAX_LAT}",
            p.lat
        )));
    }
    Ok(())
}

/// Spherical Mercator `(east, north)` meters of `p` relative to `origin`.
pub fn mercator<T: Scalar>(p: GeoPoint<T>, origin: GeoPoint<T>) -> Result<(T, T)> {
    check_mercator_lat(&p)?;
    check_mercator_lat(&origin)?;
    let east = T::lit(MERCATOR_RADIUS) * normalize_lon(p.lon - origin.lon).to_radians();
    let north = mercator_y(p.lat) - mercator_y(origin.lat);
    Ok((east, north))
}

/// Analytic inverse of [`mercator`].
pub fn inverse_mercator<T: Scalar>(east: T, north: T, origin: GeoPoint<T>) -> Result<GeoPoint<T>> {
    check_mercator_lat(&origin)?;
    let r = T::lit(MERCATOR_RADIUS);
    let lon = origin.lon + (east / r).to_degrees();
    let y = north + mercator_y(origin.lat);
    let lat = (T::lit(2.0) * (y / r).exp().atan() - T::FRAC_PI_2()).to_degrees();
    GeoPoint::new(lon, lat)
}

/// Intrinsic / extrinsic pinhole camera with the geodetic anchor needed to reach the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel<T = f64> {
    /// Row-major 3x3 intrinsic matrix.
    pub intrinsics: [[T; 3]; 3],
    /// Row-major 3x4 extrinsic matrix.
    pub extrinsics: [[T; 4]; 3],
    pub image_width: u32,
    pub image_height: u32,
    pub camera_geo: GeoPoint<T>,
    pub mercator_origin: GeoPoint<T>,
    /// Camera height above the water plane in meters.
    #[serde(default)]
    pub camera_height: T,
}

impl<T: Scalar> CameraModel<T> {
    /// Camera with `K_ex = [I | 0]` and Mercator origin at the camera.
    pub fn with_identity_extrinsics(
        intrinsics: [[T; 3]; 3],
        image_width: u32,
        image_height: u32,
        camera_geo: GeoPoint<T>,
        camera_height: T,
    ) -> Self {
        let z = T::zero();
        let o = T::one();
        Self {
            intrinsics,
            extrinsics: [[o, z, z, z], [z, o, z, z], [z, z, o, z]],
            image_width,
            image_height,
            camera_geo,
            mercator_origin: camera_geo,
            camera_height,
        }
    }

    /// Camera at `camera_geo` looking along `heading_deg` (clockwise from north), pitched down by
    /// `pitch_deg`, with the usual image axes (x right, y down).
    #[allow(clippy::too_many_arguments)]
    pub fn from_pose(
        camera_geo: GeoPoint<T>,
        camera_height: T,
        heading_deg: T,
        pitch_deg: T,
        focal: (T, T),
        principal: (T, T),
        image_width: u32,
        image_height: u32,
    ) -> Self {
        let (sh, ch) = heading_deg.to_radians().sin_cos();
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        let z = T::zero();
        let forward = [sh * cp, -sp, ch * cp];
        let right = [ch, z, -sh];
        // down = right x forward
        let down = [
            right[1] * forward[2] - right[2] * forward[1],
            right[2] * forward[0] - right[0] * forward[2],
            right[0] * forward[1] - right[1] * forward[0],
        ];
        let intrinsics = [[focal.0, z, principal.0], [z, focal.1, principal.1], [z, z, T::one()]];
        Self {
            intrinsics,
            extrinsics: [
                [right[0], right[1], right[2], z],
                [down[0], down[1], down[2], z],
                [forward[0], forward[1], forward[2], z],
            ],
            image_width,
            image_height,
            camera_geo,
            mercator_origin: camera_geo,
            camera_height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        let z = T::zero();
        if k[1][0] != z || k[2][0] != z || k[2][1] != z {
            return Err(Error::Validation("intrinsic matrix must be upper-triangular".into()));
        }
        if !(k[0][0] > z && k[1][1] > z) {
            return Err(Error::Validation("focal terms must be positive".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        let finite = k.iter().flatten().chain(self.extrinsics.iter().flatten()).all(|v| v.is_finite());
        if !finite || !self.camera_height.is_finite() {
            return Err(Error::Validation("camera parameters must be finite".into()));
        }
        if !self.camera_geo.is_valid() || !self.mercator_origin.is_valid() {
            return Err(Error::Validation("camera geo anchors must be valid".into()));
        }
        Ok(())
    }

    /// `K_in * K_ex` as a row-major 3x4 matrix.
    pub fn projection_matrix(&self) -> [[T; 4]; 3] {
        let mut p = [[T::zero(); 4]; 3];
        for (r, row) in p.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).fold(T::zero(), |acc, k| acc + self.intrinsics[r][k] * self.extrinsics[k][c]);
            }
        }
        p
    }

    /// World point at the water plane for Mercator offsets.
    pub fn world_from_mercator(&self, east: T, north: T) -> WorldPoint<T> {
        self.world_at(east, north, T::zero())
    }

    /// World point `elevation` meters above the water plane.
    pub fn world_at(&self, east: T, north: T, elevation: T) -> WorldPoint<T> {
        WorldPoint::new(east, elevation - self.camera_height, north)
    }

    pub fn diagonal(&self) -> T {
        T::of_usize(self.image_width as usize).hypot(T::of_usize(self.image_height as usize))
    }
}

/// Pinhole projection of a world point to pixel coordinates.
pub fn project_to_pixel<T: Scalar>(w: WorldPoint<T>, cam: &CameraModel<T>) -> Result<PixelPoint<T>> {
    let p = cam.projection_matrix();
    let h = [w.u, w.v, w.w, T::one()];
    let row = |r: usize| (0..4).fold(T::zero(), |acc, c| acc + p[r][c] * h[c]);
    let depth = row(2);
    if !(depth > T::zero()) {
        return Err(Error::BehindCamera { depth: depth.as_f64() });
    }
    Ok(PixelPoint::new(row(0) / depth, row(1) / depth))
}

/// Mercator, world frame and pinhole projection composed.
pub fn geo_to_pixel<T: Scalar>(p: GeoPoint<T>, cam: &CameraModel<T>) -> Result<PixelPoint<T>> {
    let (east, north) = mercator(p, cam.mercator_origin)?;
    project_to_pixel(cam.world_from_mercator(east, north), cam)
}
