//! Raster primitives: exact Euclidean distance transform, connected
//! components and lattice convex hulls.

/// Squared Euclidean distance (pixels) from each pixel to the nearest set pixel;
/// `f64::INFINITY` everywhere when the mask is empty.
pub fn edt_squared(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for c in 0..width {
        for r in 0..height {
            f[r] = grid[r * width + c];
        }
        dt_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for r in 0..height {
            grid[r * width + c] = d[r];
        }
    }
    for r in 0..height {
        f[..width].copy_from_slice(&grid[r * width..(r + 1) * width]);
        dt_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        grid[r * width..(r + 1) * width].copy_from_slice(&d[..width]);
    }
    grid
}

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        d.fill(f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let s = |p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
        // z[0] is -inf, so k never underflows
        while s(v[k]) <= z[k] {
            k -= 1;
        }
        let sk = s(v[k]);
        k += 1;
        v[k] = q;
        z[k] = sk;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Pixels within `radius` pixels (centre to centre) of the mask.
pub fn dilate(mask: &[bool], width: usize, height: usize, radius: f64) -> Vec<bool> {
    let r2 = radius * radius;
    edt_squared(mask, width, height).into_iter().map(|d| d <= r2).collect()
}

/// 8-connected component labels in row-major discovery order, starting at 1;
/// 0 marks background. Returns labels and the pixel count of each component.
pub fn components8(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, Vec<usize>) {
    let mut label = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = ((i / width) as isize, (i % width) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                        continue;
                    }
                    let j = nr as usize * width + nc as usize;
                    if mask[j] && label[j] == 0 {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Mask of the largest 8-connected component; ties go to the component whose
/// first pixel in row-major order comes earliest.
pub fn largest_component(mask: &[bool], width: usize, height: usize) -> Vec<bool> {
    let (label, sizes) = components8(mask, width, height);
    let mut best = 0usize;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    let keep = best as u32 + 1;
    label.iter().map(|&l| !sizes.is_empty() && l == keep).collect()
}

fn cross(o: [i64; 2], a: [i64; 2], b: [i64; 2]) -> i64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull of lattice points, counter-clockwise in (col, row) coordinates,
/// collinear points dropped.
pub fn convex_hull(mut pts: Vec<[i64; 2]>) -> Vec<[i64; 2]> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[i64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[i64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether lattice point `p` lies inside or on the hull.
pub fn hull_contains(hull: &[[i64; 2]], p: [i64; 2]) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0 && p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Pixels whose centres lie in the convex hull of the set pixels' centres.
pub fn hull_fill(mask: &[bool], width: usize, height: usize) -> Vec<bool> {
    // extreme columns per row are enough to span the hull
    let mut pts = Vec::new();
    for r in 0..height {
        let row = &mask[r * width..(r + 1) * width];
        if let (Some(a), Some(b)) = (row.iter().position(|&m| m), row.iter().rposition(|&m| m)) {
            pts.push([a as i64, r as i64]);
            pts.push([b as i64, r as i64]);
        }
    }
    let hull = convex_hull(pts);
    let mut out = vec![false; mask.len()];
    if hull.is_empty() {
        return out;
    }
    let (r0, r1) = (hull.iter().map(|p| p[1]).min().unwrap(), hull.iter().map(|p| p[1]).max().unwrap());
    let (c0, c1) = (hull.iter().map(|p| p[0]).min().unwrap(), hull.iter().map(|p| p[0]).max().unwrap());
    for r in r0..=r1 {
        for c in c0..=c1 {
            if hull_contains(&hull, [c, r]) {
                out[r as usize * width + c as usize] = true;
            }
        }
    }
    out
}
