use nalgebra::DVector;

/// A set of flattened decision vectors sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    dim: usize,
    particles: Vec<DVector<f64>>,
}

impl ParticleSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            particles: Vec::new(),
        }
    }

    /// Panics if the vectors disagree with `dim`.
    pub fn from_vectors(particles: Vec<DVector<f64>>, dim: usize) -> Self {
        assert!(
            particles.iter().all(|p| p.len() == dim),
            "all particles must have dimension {dim}"
        );
        Self { dim, particles }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[DVector<f64>] {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.particles
    }

    pub fn get(&self, i: usize) -> &DVector<f64> {
        &self.particles[i]
    }

    pub fn push(&mut self, p: DVector<f64>) {
        assert_eq!(p.len(), self.dim);
        self.particles.push(p);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DVector<f64>> {
        self.particles.iter()
    }

    pub fn into_vec(self) -> Vec<DVector<f64>> {
        self.particles
    }
}

impl<'a> IntoIterator for &'a ParticleSet {
    type Item = &'a DVector<f64>;
    type IntoIter = std::slice::Iter<'a, DVector<f64>>;

    fn into_iter(self) -> Self::IntoIter {
        self.particles.iter()
    }
}
