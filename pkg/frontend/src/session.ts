/** Annotation session state and the client-side submit gate.
 *
 * The gate mirrors the server's validation (at least four correspondences,
 * at least one seed color, ordered crop box) so the UI never submits a
 * document the server would reject; the server stays authoritative.
 */

import {
  AnnotationDocument,
  CorrespondencePair,
  CropBox,
  DEFAULT_PARAMS,
  LabelerParams,
  Vec3,
} from "./types.js";

export const MIN_CORRESPONDENCES = 4;

export interface PreviewOverlay {
  labels: Uint8Array;
  positiveFraction: number;
  clusterCount: number;
}

export class UiSession {
  datasetId: string;
  referenceId: string;
  frame = 0;
  pendingSource: Vec3 | null = null;
  correspondences: CorrespondencePair[] = [];
  seedColors: Vec3[] = [];
  cropBox: CropBox;
  params: LabelerParams;
  overlay: PreviewOverlay | null = null;

  constructor(datasetId: string, referenceId?: string) {
    this.datasetId = datasetId;
    this.referenceId = referenceId ?? datasetId;
    this.cropBox = { min: [-0.1, -0.1, -0.01], max: [0.1, 0.1, 0.09] };
    this.params = { ...DEFAULT_PARAMS };
  }

  /** Picks alternate: first on the current frame (source), then on the
   * reference frame to complete the pair. */
  pickCorrespondence(view: "current" | "reference", point: Vec3): void {
    if (view === "current") {
      this.pendingSource = point;
      return;
    }
    if (this.pendingSource === null) return; // reference pick with nothing pending
    this.correspondences.push({ source: this.pendingSource, reference: point });
    this.pendingSource = null;
    this.overlay = null;
  }

  deleteCorrespondence(index: number): void {
    this.correspondences.splice(index, 1);
    this.overlay = null;
  }

  pickSeedColor(color: Vec3): void {
    this.seedColors.push(color);
    this.overlay = null;
  }

  deleteSeedColor(index: number): void {
    this.seedColors.splice(index, 1);
    this.overlay = null;
  }

  setCropBox(box: CropBox): void {
    // keep min <= max componentwise regardless of edit order
    const lo: Vec3 = [0, 0, 0];
    const hi: Vec3 = [0, 0, 0];
    for (let axis = 0; axis < 3; axis++) {
      lo[axis] = Math.min(box.min[axis], box.max[axis]);
      hi[axis] = Math.max(box.min[axis], box.max[axis]);
    }
    this.cropBox = { min: lo, max: hi };
    this.overlay = null;
  }

  gateReasons(): string[] {
    const reasons: string[] = [];
    if (this.correspondences.length < MIN_CORRESPONDENCES) {
      reasons.push(
        `need at least ${MIN_CORRESPONDENCES} point correspondences ` +
          `(have ${this.correspondences.length})`,
      );
    }
    if (this.seedColors.length < 1) {
      reasons.push("need at least one seed color");
    }
    return reasons;
  }

  canSubmit(): boolean {
    return this.gateReasons().length === 0;
  }

  toDocument(): AnnotationDocument {
    return {
      schema_version: 1,
      dataset: this.datasetId,
      correspondences: this.correspondences.map((pair) => ({
        source: [...pair.source] as Vec3,
        reference: [...pair.reference] as Vec3,
      })),
      crop_box: { min: [...this.cropBox.min] as Vec3, max: [...this.cropBox.max] as Vec3 },
      seed_colors: this.seedColors.map((c) => [...c] as Vec3),
      params: { ...this.params },
    };
  }

  loadDocument(doc: AnnotationDocument): void {
    this.correspondences = doc.correspondences.map((pair) => ({
      source: [...pair.source] as Vec3,
      reference: [...pair.reference] as Vec3,
    }));
    this.seedColors = doc.seed_colors.map((c) => [...c] as Vec3);
    this.cropBox = {
      min: [...doc.crop_box.min] as Vec3,
      max: [...doc.crop_box.max] as Vec3,
    };
    this.params = { ...doc.params };
    this.pendingSource = null;
    this.overlay = null;
  }
}
