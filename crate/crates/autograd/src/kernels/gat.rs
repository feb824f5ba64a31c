use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Attention-weighted neighbor aggregation of a single-layer GAT.
///
/// `proj` holds the projected node features `g W` (N x d); `scores` is
/// N x 2 with column 0 the target-side score `a_dst · (g_v W)` and column 1
/// the source-side score `a_src · (g_u W)`. For node `v` the logit of
/// neighbor `u` is `leaky_relu(scores[v,0] + scores[u,1])`, softmaxed over
/// `neighbors[v]`. Returns the aggregated features and the flattened
/// attention coefficients (same order as `neighbors`).
pub fn forward<T: Scalar>(
    proj: &Tensor<T>,
    scores: &Tensor<T>,
    neighbors: &[Vec<usize>],
    slope: T,
) -> (Tensor<T>, Vec<T>) {
    let d = proj.cols();
    let mut out = Tensor::zeros(proj.rows(), d);
    let mut alphas = Vec::with_capacity(neighbors.iter().map(Vec::len).sum());
    for (v, nbrs) in neighbors.iter().enumerate() {
        let start = alphas.len();
        for &u in nbrs {
            alphas.push(leaky(scores.get(v, 0) + scores.get(u, 1), slope));
        }
        let a = &mut alphas[start..];
        super::attention::softmax_in_place(a);
        let orow = out.row_mut(v);
        for (&u, &w) in nbrs.iter().zip(a.iter()) {
            for (o, &x) in orow.iter_mut().zip(proj.row(u)) {
                *o = *o + w * x;
            }
        }
    }
    (out, alphas)
}

/// Gradients `(dproj, dscores)`.
pub fn backward<T: Scalar>(
    dout: &Tensor<T>,
    proj: &Tensor<T>,
    scores: &Tensor<T>,
    neighbors: &[Vec<usize>],
    alphas: &[T],
    slope: T,
) -> (Tensor<T>, Tensor<T>) {
    let mut dproj = Tensor::zeros(proj.rows(), proj.cols());
    let mut dscores = Tensor::zeros(scores.rows(), 2);
    let mut dalpha: Vec<T> = Vec::new();
    let mut off = 0;
    for (v, nbrs) in neighbors.iter().enumerate() {
        let a = &alphas[off..off + nbrs.len()];
        let go = dout.row(v);
        dalpha.clear();
        for (&u, &w) in nbrs.iter().zip(a) {
            let row = dproj.row_mut(u);
            for (dp, &g) in row.iter_mut().zip(go) {
                *dp = *dp + w * g;
            }
            dalpha.push(go.iter().zip(proj.row(u)).map(|(&g, &x)| g * x).sum());
        }
        let dot: T = a.iter().zip(&dalpha).map(|(&w, &g)| w * g).sum();
        for ((&u, &w), &g) in nbrs.iter().zip(a).zip(&dalpha) {
            let pre = scores.get(v, 0) + scores.get(u, 1);
            let de = w * (g - dot) * if pre > T::zero() { T::one() } else { slope };
            let cur = dscores.get(v, 0);
            dscores.set(v, 0, cur + de);
            let cur = dscores.get(u, 1);
            dscores.set(u, 1, cur + de);
        }
        off += nbrs.len();
    }
    (dproj, dscores)
}

fn leaky<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}
