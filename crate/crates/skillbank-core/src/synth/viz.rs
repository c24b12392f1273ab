//! Pixel-level drawing for visual prompt images: waypoint markers, index
//! digits, bounding boxes, and grid lines. All deterministic, no fonts.

use image::{Rgba, RgbaImage};

pub const GREEN: Rgba<u8> = Rgba([0, 200, 0, 255]);
pub const RED: Rgba<u8> = Rgba([220, 40, 40, 255]);
pub const GRID_GRAY: Rgba<u8> = Rgba([160, 160, 160, 255]);

/// 3x5 bitmap glyphs for '0'..'9', one row per byte, low 3 bits used.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

pub fn put_pixel(img: &mut RgbaImage, x: i64, y: i64, color: Rgba<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Filled disc clipped to the image.
pub fn draw_disc(img: &mut RgbaImage, cx: i64, cy: i64, radius: i64, color: Rgba<u8>) {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                put_pixel(img, cx + dx, cy + dy, color);
            }
        }
    }
}

/// Draws a decimal number with the 3x5 glyphs, 1 px between digits.
pub fn draw_number(img: &mut RgbaImage, x: i64, y: i64, value: usize, color: Rgba<u8>) {
    let text = value.to_string();
    let mut cursor = x;
    for ch in text.bytes() {
        let glyph = &DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    put_pixel(img, cursor + col as i64, y + row as i64, color);
                }
            }
        }
        cursor += 4;
    }
}

/// Bresenham line.
pub fn draw_line(img: &mut RgbaImage, mut x0: i64, mut y0: i64, x1: i64, y1: i64, color: Rgba<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put_pixel(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Axis-aligned rectangle outline.
pub fn draw_rect(img: &mut RgbaImage, x: i64, y: i64, w: i64, h: i64, color: Rgba<u8>) {
    draw_line(img, x, y, x + w, y, color);
    draw_line(img, x, y + h, x + w, y + h, color);
    draw_line(img, x, y, x, y + h, color);
    draw_line(img, x + w, y, x + w, y + h, color);
}
