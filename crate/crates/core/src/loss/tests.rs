use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(w: usize, h: usize, ch: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_vec(w, h, ch, (0..w * h * ch).map(|_| rng.random()).collect()).unwrap()
}

fn random_mask(w: usize, h: usize, space: MaskSpace, seed: u64) -> SkinMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = SkinMask::from_fn(w, h, space, |_, _| false);
    m.bits.iter_mut().for_each(|b| *b = rng.random_bool(0.6));
    m.bits[0] = true;
    m.bits[1] = true;
    m
}

/// Central-difference check. Elements where the two one-sided slopes disagree
/// (a kink within the step) are skipped; returns the number checked.
fn check_gradient(f: impl Fn(&Image) -> f64, x: &Image, grad: &Image) -> usize {
    let h = 1e-4;
    let f0 = f(x);
    let mut checked = 0;
    for k in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[k] += h;
        let mut xm = x.clone();
        xm.data_mut()[k] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
        if (right - left).abs() > 1e-5 * (1.0 + right.abs().max(left.abs())) {
            continue;
        }
        let fd = (fp - fm) / (2.0 * h);
        let g = grad.data()[k];
        assert!(
            (fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()).max(1e-3),
            "element {k}: finite difference {fd} vs analytic {g}"
        );
        checked += 1;
    }
    checked
}

fn two_layer() -> ConvExtractor {
    ConvExtractor::seeded(&[3, 4, 6], 7)
}

// ---- independent scalar oracles ----

fn oracle_conv_layers(ex: &ConvExtractor, x: &Image) -> Vec<Vec<Vec<Vec<f64>>>> {
    // Returns [layer][channel][row][col].
    let (w, h) = (x.width(), x.height());
    let mut cur: Vec<Vec<Vec<f64>>> = (0..x.channels())
        .map(|c| (0..h).map(|y| (0..w).map(|xx| x.get(xx, y, c)).collect()).collect())
        .collect();
    let mut out = Vec::new();
    for layer in &ex.layers {
        let (ih, iw) = (cur[0].len(), cur[0][0].len());
        let (oh, ow) = ((ih + 1) / 2, (iw + 1) / 2);
        let mut next = vec![vec![vec![0.0; ow]; oh]; layer.out_channels];
        for o in 0..layer.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = layer.bias[o];
                    for i in 0..layer.in_channels {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let y = 2 * oy as isize + ky as isize - 1;
                                let xx = 2 * ox as isize + kx as isize - 1;
                                if y >= 0 && xx >= 0 && (y as usize) < ih && (xx as usize) < iw {
                                    s += layer.weight(o, i, ky, kx) * cur[i][y as usize][xx as usize];
                                }
                            }
                        }
                    }
                    next[o][oy][ox] = if s > 0.0 { s } else { 0.0 };
                }
            }
        }
        out.push(next.clone());
        cur = next;
    }
    out
}

#[test]
fn pixel_loss_image_examples() {
    let a = random(2, 2, 3, 1);
    let mask = SkinMask::full(2, 2, MaskSpace::Image);
    assert_eq!(pixel_loss_image(&a, &a, &mask).unwrap(), 0.0);

    let mut b = a.clone();
    for (c, d) in [0.1, 0.2, 0.3].iter().enumerate() {
        b.set(1, 0, c, a.get(1, 0, c) + d);
    }
    let one = SkinMask::from_fn(2, 2, MaskSpace::Image, |x, y| (x, y) == (1, 0));
    assert!((pixel_loss_image(&a, &b, &one).unwrap() - 0.6).abs() < 1e-12);

    let black = Image::new(4, 4, 3);
    let white = Image::filled(4, 4, 3, 1.0);
    let full = SkinMask::full(4, 4, MaskSpace::Image);
    assert_eq!(pixel_loss_image(&black, &white, &full).unwrap(), 3.0);

    let empty = SkinMask::from_fn(4, 4, MaskSpace::Image, |_, _| false);
    assert!(matches!(pixel_loss_image(&black, &white, &empty), Err(Error::Validation(_))));
}

#[test]
fn pixel_losses_match_oracles() {
    for seed in 0..5 {
        let (a, b) = (random(8, 8, 3, seed), random(8, 8, 3, seed + 100));
        let mask = random_mask(8, 8, MaskSpace::Image, seed);
        let mut s = 0.0;
        let mut n = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                if mask.at(x, y) {
                    n += 1.0;
                    for c in 0..3 {
                        s += (a.get(x, y, c) - b.get(x, y, c)).abs();
                    }
                }
            }
        }
        assert!((pixel_loss_image(&a, &b, &mask).unwrap() - s / n).abs() < 1e-9);
        assert_eq!(pixel_loss_image(&a, &b, &mask).unwrap(), pixel_loss_image(&b, &a, &mask).unwrap());

        let mut t = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    t += (a.get(x, y, c) - b.get(x, y, c)).abs();
                }
            }
        }
        assert!((pixel_loss_texture(&a, &b).unwrap() - t / 64.0).abs() < 1e-12);
    }
}

#[test]
fn pixel_loss_texture_examples() {
    let f = random(8, 8, 3, 2);
    assert_eq!(pixel_loss_texture(&f, &f).unwrap(), 0.0);
    let g = Image::filled(4, 4, 3, 0.5);
    let h = Image::filled(4, 4, 3, 0.75);
    assert_eq!(pixel_loss_texture(&g, &h).unwrap(), 0.75);
    assert!(pixel_loss_texture(&g, &f).is_err());
}

#[test]
fn perceptual_loss_examples_and_oracle() {
    let (a, b) = (random(8, 8, 3, 3), random(8, 8, 3, 4));
    let ex = two_layer();
    assert_eq!(perceptual_loss(&a, &a, &ex).unwrap(), 0.0);

    let id = perceptual_loss(&a, &b, &IdentityExtractor).unwrap();
    let mean_l1: f64 =
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64;
    assert!((id - mean_l1).abs() < 1e-12);

    let (la, lb) = (oracle_conv_layers(&ex, &a), oracle_conv_layers(&ex, &b));
    let mut expect = 0.0;
    for (pa, pb) in la.iter().zip(&lb) {
        let mut s = 0.0;
        let mut n = 0.0;
        for (ca, cb) in pa.iter().zip(pb) {
            for (ra, rb) in ca.iter().zip(cb) {
                for (va, vb) in ra.iter().zip(rb) {
                    s += (va - vb).abs();
                    n += 1.0;
                }
            }
        }
        expect += s / n;
    }
    assert!((perceptual_loss(&a, &b, &ex).unwrap() - expect).abs() < 1e-9);
}

#[test]
fn style_loss_examples_and_oracle() {
    let act = Image::from_vec(2, 1, 1, vec![0.3, 0.7]).unwrap();
    assert!((gram_matrix(&act)[0] - (0.09 + 0.49) / 2.0).abs() < 1e-15);

    let (a, b) = (random(8, 8, 3, 5), random(8, 8, 3, 6));
    let ex = two_layer();
    assert_eq!(style_loss(&a, &a, &ex).unwrap(), 0.0);
    assert!((style_loss(&a, &b, &ex).unwrap() - style_loss(&b, &a, &ex).unwrap()).abs() < 1e-15);

    let (la, lb) = (oracle_conv_layers(&ex, &a), oracle_conv_layers(&ex, &b));
    let gram = |l: &Vec<Vec<Vec<f64>>>| {
        let c = l.len();
        let (h, w) = (l[0].len(), l[0][0].len());
        let mut g = vec![vec![0.0; c]; c];
        for i in 0..c {
            for j in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        g[i][j] += l[i][y][x] * l[j][y][x];
                    }
                }
                g[i][j] /= (c * h * w) as f64;
            }
        }
        g
    };
    let mut expect = 0.0;
    for (pa, pb) in la.iter().zip(&lb) {
        let (ga, gb) = (gram(pa), gram(pb));
        let mut s = 0.0;
        for i in 0..ga.len() {
            for j in 0..ga.len() {
                s += (ga[i][j] - gb[i][j]).abs();
            }
        }
        expect += s / la.len() as f64;
    }
    assert!((style_loss(&a, &b, &ex).unwrap() - expect).abs() < 1e-9);
}

#[test]
fn gram_is_invariant_to_pixel_shuffles() {
    let (a, b) = (random(16, 1, 5, 7), random(16, 1, 5, 8));
    let perm: Vec<usize> = (0..16).map(|i| (i * 7 + 3) % 16).collect();
    let shuffle = |img: &Image| {
        let mut out = img.clone();
        for (i, &p) in perm.iter().enumerate() {
            out.pixel_mut(i, 0).copy_from_slice(img.pixel(p, 0));
        }
        out
    };
    let before = style_loss(&a, &b, &IdentityExtractor).unwrap();
    let after = style_loss(&shuffle(&a), &shuffle(&b), &IdentityExtractor).unwrap();
    assert!((before - after).abs() < 1e-12);
}

#[test]
fn symmetry_loss_examples() {
    let two = Image::from_vec(2, 1, 1, vec![0.0, 1.0]).unwrap();
    assert_eq!(symmetry_loss(&two), 1.0);
    let a = random(8, 8, 3, 9);
    let sym = {
        let mut s = a.clone();
        for y in 0..8 {
            for x in 4..8 {
                let src = a.pixel(7 - x, y).to_vec();
                s.pixel_mut(x, y).copy_from_slice(&src);
            }
        }
        s
    };
    assert_eq!(symmetry_loss(&sym), 0.0);
    assert!((symmetry_loss(&a) - symmetry_loss(&a.mirrored())).abs() < 1e-15);

    let mut s = 0.0;
    for y in 0..8 {
        for x in 0..4 {
            for c in 0..3 {
                s += (a.get(x, y, c) - a.get(7 - x, y, c)).abs();
            }
        }
    }
    assert!((symmetry_loss(&a) - 2.0 * s / 64.0).abs() < 1e-12);
}

#[test]
fn skin_std_loss_examples() {
    let flat = Image::filled(4, 4, 3, 0.4);
    let full = SkinMask::full(4, 4, MaskSpace::Uv);
    assert_eq!(skin_std_loss(&flat, &full).unwrap(), 0.0);

    let pair = Image::from_vec(2, 1, 1, vec![0.0, 1.0]).unwrap();
    assert_eq!(skin_std_loss(&pair, &SkinMask::full(2, 1, MaskSpace::Uv)).unwrap(), 0.5);

    let one = SkinMask::from_fn(4, 4, MaskSpace::Uv, |x, y| x + y == 0);
    assert!(matches!(skin_std_loss(&flat, &one), Err(Error::Validation(_))));

    let a = random(8, 8, 3, 10);
    let mut half = a.clone();
    half.data_mut().iter_mut().for_each(|v| *v *= 0.5);
    let m = random_mask(8, 8, MaskSpace::Uv, 11);
    assert!((skin_std_loss(&half, &m).unwrap() - 0.5 * skin_std_loss(&a, &m).unwrap()).abs() < 1e-12);

    let mut expect = 0.0;
    for c in 0..3 {
        let vals: Vec<f64> = (0..64).filter(|&p| m.bits[p]).map(|p| a.data()[p * 3 + c]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        expect += var.sqrt() / 3.0;
    }
    assert!((skin_std_loss(&a, &m).unwrap() - expect).abs() < 1e-9);
}

#[test]
fn adversarial_examples() {
    assert!((adversarial_generator_loss(0.5) - 0.5f64.ln().abs()).abs() < 1e-15);
    assert!(adversarial_generator_loss(1.0) < 1e-6);
    assert!(adversarial_generator_loss(0.0).is_finite());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (s, t): (f64, f64) = (rng.random(), rng.random());
        let (lo, hi) = if s < t { (s, t) } else { (t, s) };
        assert!(adversarial_generator_loss(lo) >= adversarial_generator_loss(hi));
        let d = adversarial_discriminator_loss(s, t);
        assert!((d - adversarial_discriminator_loss(1.0 - t, 1.0 - s)).abs() < 1e-12);
    }
    assert!((adversarial_discriminator_loss(0.5, 0.5) - 2.0 * 2f64.ln()).abs() < 1e-15);
    assert!(adversarial_discriminator_loss(1.0, 0.0) < 1e-6);
    let h = 1e-6;
    let fd = (adversarial_generator_loss(0.3 + h) - adversarial_generator_loss(0.3 - h)) / (2.0 * h);
    assert!((fd - adversarial_generator_grad(0.3)).abs() < 1e-6);
}

#[test]
fn total_loss_examples() {
    let w = LossWeights::default();
    assert_eq!(
        (w.lambda_l1, w.lambda_perc, w.lambda_sty, w.lambda_sym, w.lambda_std, w.lambda_adv),
        (3.0, 1.0, 1.0, 0.1, 3.0, 0.001)
    );
    assert_eq!(total_generator_loss(&LossComponents::uniform(0.0), &w).unwrap().total, 0.0);
    let unit = total_generator_loss(&LossComponents::uniform(1.0), &w).unwrap();
    assert!((unit.total - 13.102).abs() < 1e-9);
    assert_eq!(unit.terms.len(), 10);

    let unsup = total_generator_loss(&LossComponents::uniform(1.0).without_ground_truth(), &w).unwrap();
    let names: Vec<&str> = unsup.terms.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names.len(), 7);
    for dropped in ["texture_l1", "texture_perceptual", "texture_style"] {
        assert!(!names.contains(&dropped));
    }

    let mut c = LossComponents::uniform(0.5);
    let base = total_generator_loss(&c, &w).unwrap().total;
    c.symmetry *= 2.0;
    let doubled = total_generator_loss(&c, &w).unwrap().total;
    assert!((doubled - base - w.lambda_sym * 0.5).abs() < 1e-12);

    c.skin_std = f64::NAN;
    match total_generator_loss(&c, &w) {
        Err(Error::Validation(msg)) => assert!(msg.contains("skin_std")),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn weights_parse_from_json() {
    let w: LossWeights = serde_json::from_str(r#"{"lambda_sym": 0.5}"#).unwrap();
    assert_eq!(w.lambda_sym, 0.5);
    assert_eq!(w.lambda_l1, 3.0);
    assert!(serde_json::from_str::<LossWeights>(r#"{"lambda_x": 1}"#).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let ex = two_layer();
    for seed in 0..3 {
        let (a, b) = (random(8, 8, 3, 20 + seed), random(8, 8, 3, 40 + seed));
        let img_mask = random_mask(8, 8, MaskSpace::Image, seed);
        let uv_mask = random_mask(8, 8, MaskSpace::Uv, seed + 9);

        let g = pixel_loss_image_grad(&a, &b, &img_mask).unwrap();
        assert!(check_gradient(|x| pixel_loss_image(x, &b, &img_mask).unwrap(), &a, &g.d_a) > 150);
        check_gradient(|y| pixel_loss_image(&a, y, &img_mask).unwrap(), &b, &g.d_b);

        let g = pixel_loss_texture_grad(&a, &b).unwrap();
        assert!(check_gradient(|x| pixel_loss_texture(x, &b).unwrap(), &a, &g.d_a) > 150);

        let g = perceptual_loss_grad(&a, &b, &ex).unwrap();
        assert!(check_gradient(|x| perceptual_loss(x, &b, &ex).unwrap(), &a, &g.d_a) > 150);
        check_gradient(|y| perceptual_loss(&a, y, &ex).unwrap(), &b, &g.d_b);

        let g = style_loss_grad(&a, &b, &ex).unwrap();
        assert!(check_gradient(|x| style_loss(x, &b, &ex).unwrap(), &a, &g.d_a) > 150);
        check_gradient(|y| style_loss(&a, y, &ex).unwrap(), &b, &g.d_b);

        let g = symmetry_loss_grad(&a);
        assert!(check_gradient(symmetry_loss, &a, &g.d) > 150);

        let g = skin_std_loss_grad(&a, &uv_mask).unwrap();
        assert!(check_gradient(|x| skin_std_loss(x, &uv_mask).unwrap(), &a, &g.d) > 150);
    }
}

#[test]
fn default_extractor_backward_matches_finite_differences() {
    let ex = ConvExtractor::default();
    let (a, b) = (random(8, 8, 3, 60), random(8, 8, 3, 61));
    let g = perceptual_loss_grad(&a, &b, &ex).unwrap();
    assert!(check_gradient(|x| perceptual_loss(x, &b, &ex).unwrap(), &a, &g.d_a) > 100);
    assert_eq!(ex.extract(&a).len(), 3);
    assert_eq!(ex.extract(&a)[2].channels(), 32);
}

#[test]
fn psnr_examples() {
    let a = random(8, 8, 3, 70);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    let black = Image::new(4, 4, 3);
    assert_eq!(psnr(&black, &Image::filled(4, 4, 3, 1.0)).unwrap(), 0.0);
    assert!((psnr(&black, &Image::filled(4, 4, 3, 0.1)).unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn ssim_examples() {
    let a = random(16, 16, 3, 71);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    assert!(ssim(&random(10, 16, 3, 1), &random(10, 16, 3, 2)).is_err());

    let (ca, cb) = (Image::filled(12, 12, 1, 0.0), Image::filled(12, 12, 1, 1.0));
    let expect = (SSIM_C1 * SSIM_C2) / ((1.0 + SSIM_C1) * SSIM_C2);
    assert!((ssim(&ca, &cb).unwrap() - expect).abs() < 1e-12);

    let b = random(16, 16, 3, 72);
    let mut a2 = a.clone();
    let mut b2 = b.clone();
    a2.data_mut().iter_mut().for_each(|v| *v = *v * 0.8 + 0.05);
    b2.data_mut().iter_mut().for_each(|v| *v = *v * 0.8 + 0.05);
    let mut a3 = a2.clone();
    let mut b3 = b2.clone();
    a3.data_mut().iter_mut().for_each(|v| *v += 0.1);
    b3.data_mut().iter_mut().for_each(|v| *v += 0.1);
    assert!((ssim(&a2, &b2).unwrap() - ssim(&a3, &b3).unwrap()).abs() < 0.02);
}
