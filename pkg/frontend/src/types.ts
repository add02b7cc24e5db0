/** Shapes shared with the annotation service's JSON API. */

export type Vec3 = [number, number, number];

export interface CorrespondencePair {
  source: Vec3; // picked on the current dataset's first frame
  reference: Vec3; // picked on the reference frame
}

export interface CropBox {
  min: Vec3;
  max: Vec3;
}

export interface LabelerParams {
  neighbor_radius: number;
  color_threshold: number;
  seed_color_tolerance: number;
  adjacency_distance: number;
  min_cluster_size: number;
}

export const DEFAULT_PARAMS: LabelerParams = {
  neighbor_radius: 0.005,
  color_threshold: 0.12,
  seed_color_tolerance: 0.2,
  adjacency_distance: 0.005,
  min_cluster_size: 50,
};

export interface AnnotationDocument {
  schema_version: number;
  dataset?: string;
  correspondences: CorrespondencePair[];
  crop_box: CropBox;
  seed_colors: Vec3[];
  params: LabelerParams;
}

export interface DatasetInfo {
  id: string;
  frames: number;
  first_frame_points: number;
  has_annotation: boolean;
}

export interface PreviewResult {
  n_points: number;
  positive_count: number;
  positive_fraction: number;
  cluster_count: number;
  matched_cluster_count: number;
  labels_bitset: string;
  bit_order: string;
}
