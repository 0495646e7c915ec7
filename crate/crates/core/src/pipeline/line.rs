use super::request::{Application, InputAvailability};
use super::PipelineError;

/// One block-step of a product line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Flexion,
    Tracking,
    DepthEstimation,
    Completion,
    Reconstruction,
}

/// Ordered block-steps resolved from the request. Every part's inputs are
/// produced by an earlier part or supplied by the request; the assembly
/// never inserts a part whose output the inputs already provide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductLine {
    pub parts: Vec<Part>,
}

impl ProductLine {
    pub fn contains(&self, part: Part) -> bool {
        self.parts.contains(&part)
    }
}

/// Deterministic product-line assembly.
///
/// Adopted dependency mapping per application (the dotted optional edges of
/// the dependency graph resolved to a fixed table):
///
/// | application      | flexion            | tracking     | depth part                      | reconstruction |
/// |------------------|--------------------|--------------|---------------------------------|----------------|
/// | Flexion          | always             | –            | –                               | –              |
/// | Tracking         | if no rgb          | always       | –                               | –              |
/// | MVD              | –                  | if no pose   | depth estimation                | –              |
/// | Completion       | –                  | –            | completion                      | –              |
/// | RGB-D-SLAM       | if no rgb          | if no pose   | (depth given)                   | always         |
/// | Mono-SLAM        | –                  | if no pose   | depth estimation                | always         |
/// | Depth-only-SLAM  | always (no rgb)    | if no pose   | (depth given)                   | always         |
/// | Reconstruction   | if no rgb          | if no pose   | completion if sparse, else
/// |                  |                    |              | estimation if rgb-only          | always         |
pub fn establish_product_line(
    application: Application,
    inputs: &InputAvailability,
) -> Result<ProductLine, PipelineError> {
    let unsat = |msg: &str| Err(PipelineError::UnsatisfiableRequest(msg.into()));
    if !inputs.rgb && !inputs.depth && !inputs.sparse_depth {
        return unsat("no rgb and no depth of any kind");
    }

    let mut parts = Vec::new();
    let needs_image = matches!(application, Application::Flexion)
        || application.needs_pose()
        || application.wants_reconstruction();
    if needs_image && !inputs.rgb {
        if inputs.depth {
            parts.push(Part::Flexion);
        } else {
            return unsat("a trackable image needs rgb or dense depth");
        }
    }

    match application {
        Application::Flexion => {
            if inputs.rgb {
                // flexion is the product itself; it still needs depth
                if !inputs.depth {
                    return unsat("flexion conversion needs dense depth");
                }
                parts.push(Part::Flexion);
            }
            if !inputs.intrinsics {
                return unsat("flexion conversion needs intrinsics");
            }
            return Ok(ProductLine { parts });
        }
        Application::Completion => {
            if !inputs.sparse_depth {
                return unsat("completion needs a sparse depth input");
            }
            parts.push(Part::Completion);
            return Ok(ProductLine { parts });
        }
        _ => {}
    }

    if application.needs_pose() && !inputs.pose {
        parts.push(Part::Tracking);
    }
    if (inputs.depth || inputs.sparse_depth) && !inputs.intrinsics {
        return unsat("depth-consuming blocks need intrinsics");
    }

    if application.needs_dense_depth() {
        if application == Application::Mvd {
            if !inputs.rgb {
                return unsat("multi-view depth estimation needs rgb input");
            }
            parts.push(Part::DepthEstimation);
        } else if inputs.depth {
            // metric dense depth already present
        } else if inputs.sparse_depth {
            parts.push(Part::Completion);
        } else if inputs.rgb {
            parts.push(Part::DepthEstimation);
        } else {
            return unsat("no path to a dense metric depth");
        }
    }

    if application.wants_reconstruction() {
        parts.push(Part::Reconstruction);
    }
    Ok(ProductLine { parts })
}
