//! Reference formulas written straight from their definitions. They share no
//! code with the library.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Full B x B similarity matrix, then mean of -log softmax on the diagonal.
pub fn mnr(teacher: &[Vec<f64>], student: &[Vec<f64>], scale: f64) -> f64 {
    let b = teacher.len();
    let matrix: Vec<Vec<f64>> = (0..b)
        .map(|i| (0..b).map(|j| scale * cos(&teacher[i], &student[j])).collect())
        .collect();
    let mut total = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        total -= (row[i].exp() / z).ln();
    }
    total / b as f64
}

pub fn mse(teacher: &[Vec<f64>], student: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..teacher.len() {
        for j in 0..teacher[i].len() {
            let d = teacher[i][j] - student[i][j];
            total += d * d;
            count += 1.0;
        }
    }
    total / count
}

/// n·Σxy − Σx·Σy over the product of the corresponding root terms.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// 1-based ranks with ties sharing the average of the positions they span.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let ties = x.iter().filter(|&&w| w == v).count() as f64;
            less + (1.0 + ties) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}
