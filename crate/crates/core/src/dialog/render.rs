//! Procedural 64×64 RGB rendering of a grid world.
//!
//! Each cell is a 16×16 patch filled with its background colour. The digit is
//! a 5×7 bitmap scaled ×2 to 10×14 and centred. `flat` digits are solid;
//! `stroke` digits are hollow: the pixels 4-adjacent to the glyph carry the
//! digit colour and the glyph body shows the background.

use alloc::vec;
use alloc::vec::Vec;

use super::world::{BgColor, Color, GridWorld, Pos, Style, GRID};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CELL_PX: usize = 16;
pub const IMAGE_PX: usize = GRID * CELL_PX;
pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;
pub const GLYPH_SCALE: usize = 2;
const OFFSET_X: usize = (CELL_PX - GLYPH_W * GLYPH_SCALE) / 2;
const OFFSET_Y: usize = (CELL_PX - GLYPH_H * GLYPH_SCALE) / 2;

/// 5×7 digit font; bit 4 of each row is the leftmost pixel.
pub const FONT: [[u8; GLYPH_H]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

pub fn color_rgb(c: Color) -> [f32; 3] {
    match c {
        Color::Red => [0.90, 0.10, 0.10],
        Color::Blue => [0.10, 0.20, 0.90],
        Color::Green => [0.10, 0.65, 0.15],
        Color::Purple => [0.55, 0.10, 0.70],
        Color::Brown => [0.50, 0.30, 0.10],
    }
}

pub fn bgcolor_rgb(c: BgColor) -> [f32; 3] {
    match c {
        BgColor::Cyan => [0.55, 0.95, 0.95],
        BgColor::Yellow => [1.00, 0.95, 0.40],
        BgColor::White => [1.00, 1.00, 1.00],
        BgColor::Silver => [0.75, 0.75, 0.75],
        BgColor::Salmon => [0.98, 0.55, 0.45],
    }
}

/// Foreground mask of one 16×16 cell, row-major.
pub fn cell_mask(number: u8, style: Style) -> [bool; CELL_PX * CELL_PX] {
    let mut glyph = [false; CELL_PX * CELL_PX];
    for gy in 0..GLYPH_H * GLYPH_SCALE {
        let bits = FONT[number as usize][gy / GLYPH_SCALE];
        for gx in 0..GLYPH_W * GLYPH_SCALE {
            if bits >> (GLYPH_W - 1 - gx / GLYPH_SCALE) & 1 == 1 {
                glyph[(OFFSET_Y + gy) * CELL_PX + OFFSET_X + gx] = true;
            }
        }
    }
    if style == Style::Flat {
        return glyph;
    }
    let mut ring = [false; CELL_PX * CELL_PX];
    for y in 0..CELL_PX {
        for x in 0..CELL_PX {
            if glyph[y * CELL_PX + x] {
                continue;
            }
            let near = (y > 0 && glyph[(y - 1) * CELL_PX + x])
                || (y + 1 < CELL_PX && glyph[(y + 1) * CELL_PX + x])
                || (x > 0 && glyph[y * CELL_PX + x - 1])
                || (x + 1 < CELL_PX && glyph[y * CELL_PX + x + 1]);
            ring[y * CELL_PX + x] = near;
        }
    }
    ring
}

/// Render as a `[3 × 64 × 64]` tensor with values in `[0, 1]`.
pub fn render<T: Scalar>(world: &GridWorld) -> Tensor<T> {
    let plane = IMAGE_PX * IMAGE_PX;
    let mut data: Vec<T> = vec![T::zero(); 3 * plane];
    for pos in GridWorld::positions() {
        let cell = world.cell(pos);
        let mask = cell_mask(cell.number, cell.style);
        let fg = color_rgb(cell.color);
        let bg = bgcolor_rgb(cell.bgcolor);
        let (y0, x0) = cell_origin(pos);
        for y in 0..CELL_PX {
            for x in 0..CELL_PX {
                let rgb = if mask[y * CELL_PX + x] { fg } else { bg };
                let at = (y0 + y) * IMAGE_PX + x0 + x;
                for (ch, v) in rgb.iter().enumerate() {
                    data[ch * plane + at] = T::of(*v as f64);
                }
            }
        }
    }
    Tensor::new(&[3, IMAGE_PX, IMAGE_PX], data).expect("static image shape")
}

/// Top-left pixel `(y, x)` of a cell.
pub fn cell_origin(pos: Pos) -> (usize, usize) {
    (pos.row as usize * CELL_PX, pos.col as usize * CELL_PX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_glyph_pixels_match_font_bits() {
        for d in 0..10u8 {
            let bits: u32 = FONT[d as usize].iter().map(|r| r.count_ones()).sum();
            let px = cell_mask(d, Style::Flat).iter().filter(|b| **b).count() as u32;
            assert_eq!(px, bits * (GLYPH_SCALE * GLYPH_SCALE) as u32, "digit {d}");
        }
    }

    #[test]
    fn stroke_glyph_is_disjoint_from_flat_glyph() {
        for d in 0..10u8 {
            let flat = cell_mask(d, Style::Flat);
            let stroke = cell_mask(d, Style::Stroke);
            assert!(stroke.iter().any(|b| *b));
            assert!(flat.iter().zip(&stroke).all(|(f, s)| !(*f && *s)));
        }
    }

    #[test]
    fn corner_pixel_is_background() {
        let w = GridWorld::generate(5);
        let img = render::<f32>(&w);
        let plane = IMAGE_PX * IMAGE_PX;
        for pos in GridWorld::positions() {
            let (y0, x0) = cell_origin(pos);
            let bg = bgcolor_rgb(w.cell(pos).bgcolor);
            for ch in 0..3 {
                assert_eq!(img.data()[ch * plane + y0 * IMAGE_PX + x0], bg[ch]);
            }
        }
        assert_eq!(img, render::<f32>(&w));
    }
}
