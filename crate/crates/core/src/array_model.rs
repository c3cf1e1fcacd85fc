//! Uniform linear array model: steering vectors, the angular dictionary,
//! snapshot synthesis and the real/imaginary stacked embedding.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Sensor layout of a linear array.
///
/// Sensor `m` sits at `spacing_multiples[m]` times the adjacent separation,
/// and its phase for a plane wave from `θ` is `-phase_coeffs[m] · cos θ`
/// where `phase_coeffs[m] = μ_m Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<T> {
    spacing_multiples: Vec<T>,
    spacing_wavelengths: T,
    phase_coeffs: Vec<T>,
}

impl<T: Real> ArrayGeometry<T> {
    /// Array with sensors at arbitrary multiples of a base separation given in wavelengths.
    pub fn new(spacing_multiples: Vec<T>, spacing_wavelengths: T) -> Result<Self> {
        if spacing_multiples.is_empty() {
            return Err(Error::invalid("array needs at least one sensor"));
        }
        if spacing_multiples[0] != T::zero() {
            return Err(Error::invalid("first spacing multiple must be 0"));
        }
        if spacing_multiples.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spacing multiples must be strictly increasing"));
        }
        if !(spacing_wavelengths > T::zero()) || !spacing_wavelengths.is_finite() {
            return Err(Error::invalid("spacing in wavelengths must be positive"));
        }
        let two_pi = lit::<T>(2.0 * std::f64::consts::PI);
        let phase_coeffs = spacing_multiples
            .iter()
            .map(|&d| two_pi * spacing_wavelengths * d)
            .collect();
        Ok(Self {
            spacing_multiples,
            spacing_wavelengths,
            phase_coeffs,
        })
    }

    /// `num_sensors` equally spaced sensors, `spacing_wavelengths` apart.
    pub fn uniform(num_sensors: usize, spacing_wavelengths: T) -> Result<Self> {
        let multiples = (0..num_sensors).map(|m| lit::<T>(m as f64)).collect();
        Self::new(multiples, spacing_wavelengths)
    }

    /// Uniform array with half-wavelength separation.
    pub fn half_wavelength(num_sensors: usize) -> Result<Self> {
        Self::uniform(num_sensors, lit(0.5))
    }

    /// Builds the geometry from physical distances `d_m`, propagation speed `c`,
    /// sampling period `T_s` and normalized frequency `Ω = ωT_s`.
    pub fn from_physical(distances: &[T], speed: T, sample_period: T, omega: T) -> Result<Self> {
        let base = distances.get(1).copied().unwrap_or(T::one());
        if !(base > T::zero()) {
            return Err(Error::invalid("sensor distances must be increasing from 0"));
        }
        let multiples = distances.iter().map(|&d| d / base).collect();
        // μΩ·Δd-multiple = 2π d/λ, with λ = 2π c T_s / Ω
        let two_pi = lit::<T>(2.0 * std::f64::consts::PI);
        let wavelength = two_pi * speed * sample_period / omega;
        Self::new(multiples, base / wavelength)
    }

    pub fn num_sensors(&self) -> usize {
        self.spacing_multiples.len()
    }

    pub fn spacing_multiples(&self) -> &[T] {
        &self.spacing_multiples
    }

    pub fn spacing_wavelengths(&self) -> T {
        self.spacing_wavelengths
    }

    /// Per-sensor `μ_m Ω`.
    pub fn phase_coeffs(&self) -> &[T] {
        &self.phase_coeffs
    }
}

/// Candidate DOAs, uniformly spaced over `[0°, 180°]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid<T> {
    angles: Vec<T>,
    spacing: T,
}

impl<T: Real> AngularGrid<T> {
    /// Grid `0°, s, 2s, …` up to 180°. The spacing must divide 180° evenly.
    pub fn uniform(spacing_deg: T) -> Result<Self> {
        if !(spacing_deg > T::zero()) || spacing_deg > lit(180.0) {
            return Err(Error::invalid(format!(
                "grid spacing {}° must be in (0°, 180°]",
                spacing_deg
            )));
        }
        let steps = to_f64(lit::<T>(180.0) / spacing_deg);
        let n = steps.round();
        if (steps - n).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "grid spacing {}° does not divide 180°",
                spacing_deg
            )));
        }
        let n = n as usize;
        let angles = (0..=n).map(|i| lit::<T>(i as f64) * spacing_deg).collect();
        Ok(Self {
            angles,
            spacing: spacing_deg,
        })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn angle(&self, index: usize) -> T {
        self.angles[index]
    }

    /// Index of `theta` if it is a grid angle.
    pub fn index_of(&self, theta_deg: T) -> Option<usize> {
        let pos = to_f64(theta_deg / self.spacing);
        let i = pos.round();
        if i < 0.0 || (pos - i).abs() > 1e-6 {
            return None;
        }
        let i = i as usize;
        (i < self.len()).then_some(i)
    }
}

impl Default for AngularGrid<f64> {
    fn default() -> Self {
        Self::uniform(1.0).expect("1° grid")
    }
}

/// One array output vector `y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSnapshot<T> {
    pub index: usize,
    pub data: Array1<Complex<T>>,
}

impl<T: Real> ComplexSnapshot<T> {
    pub fn new(index: usize, data: Array1<Complex<T>>) -> Self {
        Self { index, data }
    }

    pub fn realify(&self) -> Array1<T> {
        realify_vector(self.data.view())
    }
}

/// Stacked real model `ỹ = Ã x̃ + ñ`.
#[derive(Debug, Clone)]
pub struct RealEmbedding<T> {
    pub a_tilde: Array2<T>,
    pub y_tilde: Array1<T>,
}

impl<T: Real> RealEmbedding<T> {
    pub fn new(dictionary: ArrayView2<'_, Complex<T>>, snapshot: &ComplexSnapshot<T>) -> Result<Self> {
        if dictionary.nrows() != snapshot.data.len() {
            return Err(Error::shape(format!(
                "dictionary has {} rows, snapshot has {} entries",
                dictionary.nrows(),
                snapshot.data.len()
            )));
        }
        Ok(Self {
            a_tilde: realify_dictionary(dictionary),
            y_tilde: snapshot.realify(),
        })
    }
}

fn check_angle<T: Real>(theta_deg: T) -> Result<()> {
    if !(theta_deg >= T::zero() && theta_deg <= lit(180.0)) {
        return Err(Error::AngleOutOfRange(to_f64(theta_deg)));
    }
    Ok(())
}

/// `a(Ω, θ)` with element `m` equal to `exp(-j μ_m Ω cos θ)`.
pub fn steering_vector<T: Real>(geom: &ArrayGeometry<T>, theta_deg: T) -> Result<Array1<Complex<T>>> {
    check_angle(theta_deg)?;
    // cos θ as sin(90° − θ): exact zero at broadside, exact ±1 at endfire
    let c = (lit::<T>(90.0) - theta_deg).to_radians().sin();
    Ok(geom
        .phase_coeffs()
        .iter()
        .map(|&k| Complex::from_polar(T::one(), -(k * c)))
        .collect())
}

/// `M × N` matrix whose columns are the steering vectors of the grid angles.
pub fn build_dictionary<T: Real>(geom: &ArrayGeometry<T>, grid: &AngularGrid<T>) -> Result<Array2<Complex<T>>> {
    let mut a = Array2::zeros((geom.num_sensors(), grid.len()));
    for (n, &theta) in grid.angles().iter().enumerate() {
        a.column_mut(n).assign(&steering_vector(geom, theta)?);
    }
    Ok(a)
}

/// `[[ℛ(A), −ℐ(A)], [ℐ(A), ℛ(A)]]`.
pub fn realify_dictionary<T: Real>(a: ArrayView2<'_, Complex<T>>) -> Array2<T> {
    let (m, n) = a.dim();
    let re = a.mapv(|z| z.re);
    let im = a.mapv(|z| z.im);
    let mut out = Array2::zeros((2 * m, 2 * n));
    out.slice_mut(s![..m, ..n]).assign(&re);
    out.slice_mut(s![..m, n..]).assign(&im.mapv(|v| -v));
    out.slice_mut(s![m.., ..n]).assign(&im);
    out.slice_mut(s![m.., n..]).assign(&re);
    out
}

/// `[ℛ(v); ℐ(v)]`.
pub fn realify_vector<T: Real>(v: ArrayView1<'_, Complex<T>>) -> Array1<T> {
    v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
}

/// Inverse of [`realify_vector`]: `x_n = w_n + j w_{N+n}`.
pub fn complexify_vector<T: Real>(w: ArrayView1<'_, T>) -> Result<Array1<Complex<T>>> {
    if w.len() % 2 != 0 {
        return Err(Error::shape(format!(
            "cannot complexify odd-length vector ({})",
            w.len()
        )));
    }
    let n = w.len() / 2;
    Ok((0..n).map(|i| Complex::new(w[i], w[n + i])).collect())
}

/// Point sources on grid angles: `(θ in degrees, complex amplitude)`.
pub type SourceList<T> = [(T, Complex<T>)];

/// `y = A x + n`, each of the `2M` real noise components drawn iid `N(0, noise_var)`.
pub fn synthesize_snapshot<T: Real, R: Rng + ?Sized>(
    geom: &ArrayGeometry<T>,
    grid: &AngularGrid<T>,
    sources: &SourceList<T>,
    noise_var: T,
    index: usize,
    rng: &mut R,
) -> Result<ComplexSnapshot<T>> {
    if !(noise_var >= T::zero()) {
        return Err(Error::invalid("noise variance must be non-negative"));
    }
    let mut y = Array1::<Complex<T>>::zeros(geom.num_sensors());
    for &(theta, amp) in sources {
        check_angle(theta)?;
        let idx = grid.index_of(theta).ok_or(Error::OffGrid(to_f64(theta)))?;
        let a = steering_vector(geom, grid.angle(idx))?;
        y.zip_mut_with(&a, |yi, &ai| *yi = *yi + ai * amp);
    }
    let std = to_f64(noise_var).sqrt();
    for yi in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *yi = *yi + Complex::new(lit::<T>(re * std), lit::<T>(im * std));
    }
    Ok(ComplexSnapshot::new(index, y))
}

/// [`synthesize_snapshot`] with its own generator seeded from `seed`.
pub fn synthesize_snapshot_seeded<T: Real>(
    geom: &ArrayGeometry<T>,
    grid: &AngularGrid<T>,
    sources: &SourceList<T>,
    noise_var: T,
    seed: u64,
) -> Result<ComplexSnapshot<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_snapshot(geom, grid, sources, noise_var, 0, &mut rng)
}
