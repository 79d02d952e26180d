//! Global document blocks.
//!
//! Raw detector/OCR output is filtered per page (confidence cut, greedy NMS,
//! per-page cap), normalized into page-fraction coordinates and sorted into
//! reading order. Every later stage works on the resulting [`Document`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default detection confidence threshold.
pub const DEFAULT_TAU_DET: f64 = 0.5;
/// Default NMS IoU threshold.
pub const DEFAULT_TAU_NMS: f64 = 0.5;
/// Default per-page cap on surviving detections.
pub const DEFAULT_K_MAX: usize = 64;

/// Axis-aligned rectangle `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(a: [f64; 4]) -> Self {
        Rect::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        r.to_array()
    }
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn is_proper(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x0 && u <= self.x1 && v >= self.y0 && v <= self.y1
    }

    /// Intersection over union; 0 when the union is empty.
    pub fn iou(&self, other: &Rect) -> f64 {
        let ix = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let iy = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Length of the shared x-interval divided by the narrower width.
    pub fn horizontal_overlap_fraction(&self, other: &Rect) -> f64 {
        let overlap = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let narrower = self.width().min(other.width());
        if narrower <= 0.0 {
            0.0
        } else {
            (overlap / narrower).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockType {
    Title,
    SectionHeader,
    Paragraph,
    Table,
    Figure,
    Caption,
    ListItem,
    Other,
}

impl BlockType {
    pub const ALL: [BlockType; 8] = [
        BlockType::Title,
        BlockType::SectionHeader,
        BlockType::Paragraph,
        BlockType::Table,
        BlockType::Figure,
        BlockType::Caption,
        BlockType::ListItem,
        BlockType::Other,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_header(self) -> bool {
        matches!(self, BlockType::Title | BlockType::SectionHeader)
    }

    pub fn is_visual(self) -> bool {
        matches!(self, BlockType::Figure | BlockType::Table)
    }
}

/// Maps a detector label onto [`BlockType`], ignoring case. Unknown labels
/// become [`BlockType::Other`].
pub fn normalize_type(type_label: &str) -> BlockType {
    let label = type_label.trim().to_ascii_lowercase().replace([' ', '-'], "_");
    match label.as_str() {
        "title" | "doc_title" | "document_title" => BlockType::Title,
        "section_header" | "sec_title" | "section_title" | "sectionheader" | "header"
        | "heading" | "subtitle" => BlockType::SectionHeader,
        "para" | "paragraph" | "text" | "plain_text" | "abstract" => BlockType::Paragraph,
        "table" => BlockType::Table,
        "figure" | "image" | "picture" | "chart" => BlockType::Figure,
        "caption" | "figure_caption" | "table_caption" => BlockType::Caption,
        "list" | "list_item" | "listitem" => BlockType::ListItem,
        _ => BlockType::Other,
    }
}

/// One detection as produced by the layout detector and OCR, in page pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    /// 1-based page index.
    pub page: usize,
    #[serde(rename = "box")]
    pub bbox: Rect,
    pub type_label: String,
    pub confidence: f64,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub page: usize,
    pub bbox: Rect,
    #[serde(rename = "type")]
    pub block_type: BlockType,
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub page_sizes: Vec<(f64, f64)>,
    pub blocks: Vec<Block>,
}

impl Document {
    pub fn num_pages(&self) -> usize {
        self.page_sizes.len()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Checks the page range, box and reading-order invariants.
    pub fn validate(&self) -> Result<()> {
        let pages = self.num_pages();
        for (i, b) in self.blocks.iter().enumerate() {
            if b.id != i {
                return Err(Error::IdMismatch(format!(
                    "{}: block at position {i} has id {}",
                    self.doc_id, b.id
                )));
            }
            if b.page == 0 || b.page > pages {
                return Err(Error::InvalidPage { page: b.page, pages });
            }
            let r = b.bbox;
            if !(r.is_proper() && r.x0 >= 0.0 && r.y0 >= 0.0 && r.x1 <= 1.0 && r.y1 <= 1.0) {
                return Err(Error::DegenerateBox {
                    page: b.page,
                    bbox: r.to_array(),
                });
            }
        }
        for w in self.blocks.windows(2) {
            if reading_key(&w[0]) > reading_key(&w[1]) {
                return Err(Error::IdMismatch(format!(
                    "{}: blocks {} and {} violate reading order",
                    self.doc_id, w[0].id, w[1].id
                )));
            }
        }
        Ok(())
    }
}

fn reading_key(b: &Block) -> (usize, f64, f64) {
    (b.page, b.bbox.y0, b.bbox.x0)
}

/// Confidence cut, per-page greedy NMS and per-page cap.
///
/// Output is grouped by ascending page and sorted by confidence (descending)
/// within each page. Equal confidences keep their input order.
pub fn shared_det_filter(
    dets: &[RawDetection],
    tau_det: f64,
    tau_nms: f64,
    k_max: usize,
) -> Vec<RawDetection> {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].confidence >= tau_det)
        .collect();
    // stable: ties stay in input order
    order.sort_by(|&a, &b| {
        dets[a]
            .page
            .cmp(&dets[b].page)
            .then(dets[b].confidence.total_cmp(&dets[a].confidence))
    });

    let mut out: Vec<RawDetection> = Vec::new();
    let mut page_start = 0;
    for &i in &order {
        let det = &dets[i];
        if out.last().map(|d| d.page) != Some(det.page) {
            page_start = out.len();
        }
        let kept = &out[page_start..];
        if kept.len() >= k_max {
            continue;
        }
        if kept.iter().any(|k| k.bbox.iou(&det.bbox) > tau_nms) {
            continue;
        }
        out.push(det.clone());
    }
    out
}

/// Normalizes filtered detections into a [`Document`] in reading order.
pub fn build_canvas(
    doc_id: &str,
    page_sizes: &[(f64, f64)],
    dets: &[RawDetection],
) -> Result<Document> {
    let pages = page_sizes.len();
    let mut blocks = Vec::with_capacity(dets.len());
    for det in dets {
        if det.page == 0 || det.page > pages {
            return Err(Error::InvalidPage {
                page: det.page,
                pages,
            });
        }
        let (w, h) = page_sizes[det.page - 1];
        let r = det.bbox;
        let bbox = Rect::new(
            (r.x0 / w).clamp(0.0, 1.0),
            (r.y0 / h).clamp(0.0, 1.0),
            (r.x1 / w).clamp(0.0, 1.0),
            (r.y1 / h).clamp(0.0, 1.0),
        );
        if !bbox.is_proper() {
            return Err(Error::DegenerateBox {
                page: det.page,
                bbox: bbox.to_array(),
            });
        }
        blocks.push(Block {
            id: 0,
            page: det.page,
            bbox,
            block_type: normalize_type(&det.type_label),
            text: det.text.clone(),
            confidence: det.confidence,
        });
    }
    // stable sort, so exact ties keep input order
    blocks.sort_by(|a, b| {
        a.page
            .cmp(&b.page)
            .then(a.bbox.y0.total_cmp(&b.bbox.y0))
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
    });
    for (i, b) in blocks.iter_mut().enumerate() {
        b.id = i;
    }
    Ok(Document {
        doc_id: doc_id.to_string(),
        page_sizes: page_sizes.to_vec(),
        blocks,
    })
}

/// Re-expresses a document's blocks as pixel detections, the inverse of
/// [`build_canvas`] up to floating point.
pub fn to_detections(doc: &Document) -> Vec<RawDetection> {
    doc.blocks
        .iter()
        .map(|b| {
            let (w, h) = doc.page_sizes[b.page - 1];
            RawDetection {
                page: b.page,
                bbox: Rect::new(b.bbox.x0 * w, b.bbox.y0 * h, b.bbox.x1 * w, b.bbox.y1 * h),
                type_label: type_label(b.block_type).to_string(),
                confidence: b.confidence,
                text: b.text.clone(),
            }
        })
        .collect()
}

/// Canonical detector label for a block type; `normalize_type` maps it back.
pub fn type_label(t: BlockType) -> &'static str {
    match t {
        BlockType::Title => "title",
        BlockType::SectionHeader => "section_header",
        BlockType::Paragraph => "paragraph",
        BlockType::Table => "table",
        BlockType::Figure => "figure",
        BlockType::Caption => "caption",
        BlockType::ListItem => "list",
        BlockType::Other => "other",
    }
}
