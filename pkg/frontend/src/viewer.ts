/** Point-cloud view: rendering, orbit navigation, picking, crop-box gizmo. */

import * as THREE from "three";

import { DecodedFrame } from "./frame.js";
import { pickNearestPoint } from "./picking.js";
import { CropBox, Vec3 } from "./types.js";

export interface HoverInfo {
  index: number;
  position: Vec3;
  color: Vec3; // 0..1
}

interface Marker {
  mesh: THREE.Mesh;
}

const PICK_RADIUS_FRACTION = 0.01; // of the scene diagonal

export class PointCloudView {
  readonly canvas: HTMLCanvasElement;
  onPick: ((hit: HoverInfo, event: PointerEvent) => void) | null = null;
  onHover: ((hit: HoverInfo | null) => void) | null = null;
  onCropEdit: ((box: CropBox) => void) | null = null;

  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private points: THREE.Points | null = null;
  private frame: DecodedFrame | null = null;
  private baseColors: Float32Array | null = null;
  private markers: Marker[] = [];
  private markerGroup = new THREE.Group();

  private cropGroup = new THREE.Group();
  private cropBox: CropBox | null = null;
  private cropHandles: THREE.Mesh[] = [];
  private draggedHandle: { axis: number; side: 0 | 1 } | null = null;

  // orbit state
  private target = new THREE.Vector3();
  private sphericalRadius = 0.5;
  private theta = 0.6;
  private phi = 1.0;
  private sceneDiagonal = 0.3;
  private rotating = false;
  private panning = false;
  private lastPointer = { x: 0, y: 0 };

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.001, 100);
    this.scene.background = new THREE.Color(0x10141a);
    this.scene.add(this.markerGroup);
    this.scene.add(this.cropGroup);
    this.bindInput();
    this.resize();
    const loop = () => {
      this.renderer.render(this.scene, this.camera);
      requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  resize(): void {
    const width = this.canvas.clientWidth || 600;
    const height = this.canvas.clientHeight || 450;
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  setFrame(frame: DecodedFrame): void {
    this.frame = frame;
    if (this.points) {
      this.scene.remove(this.points);
      this.points.geometry.dispose();
      (this.points.material as THREE.Material).dispose();
    }
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(frame.positions, 3));
    this.baseColors = new Float32Array(frame.count * 3);
    for (let i = 0; i < frame.colors.length; i++) {
      this.baseColors[i] = frame.colors[i] / 255;
    }
    geometry.setAttribute("color", new THREE.BufferAttribute(this.baseColors.slice(), 3));
    geometry.computeBoundingBox();
    const bounds = geometry.boundingBox!;
    const size = new THREE.Vector3();
    bounds.getSize(size);
    this.sceneDiagonal = Math.max(size.length(), 1e-3);
    bounds.getCenter(this.target);
    this.sphericalRadius = this.sceneDiagonal * 1.4;

    const material = new THREE.PointsMaterial({
      size: this.sceneDiagonal / 220,
      vertexColors: true,
    });
    this.points = new THREE.Points(geometry, material);
    this.scene.add(this.points);
    this.clearMarkers();
    this.updateCamera();
  }

  get pointCount(): number {
    return this.frame ? this.frame.count : 0;
  }

  /** Tint labeled points; null restores sensor colors. */
  setOverlay(labels: Uint8Array | null): void {
    if (!this.points || !this.baseColors || !this.frame) return;
    const attr = this.points.geometry.getAttribute("color") as THREE.BufferAttribute;
    const data = attr.array as Float32Array;
    if (labels === null) {
      data.set(this.baseColors);
    } else {
      for (let i = 0; i < this.frame.count; i++) {
        if (labels[i]) {
          data[i * 3] = 1.0;
          data[i * 3 + 1] = 0.15;
          data[i * 3 + 2] = 0.15;
        } else {
          data[i * 3] = this.baseColors[i * 3] * 0.55;
          data[i * 3 + 1] = this.baseColors[i * 3 + 1] * 0.55;
          data[i * 3 + 2] = this.baseColors[i * 3 + 2] * 0.55;
        }
      }
    }
    attr.needsUpdate = true;
  }

  setMarkers(points: Vec3[], colorHex: number, pending: Vec3 | null = null): void {
    this.clearMarkers();
    const radius = this.sceneDiagonal / 120;
    for (const p of points) {
      this.addMarker(p, colorHex, radius);
    }
    if (pending) {
      this.addMarker(pending, 0xffffff, radius * 1.3);
    }
  }

  private addMarker(position: Vec3, colorHex: number, radius: number): void {
    const mesh = new THREE.Mesh(
      new THREE.SphereGeometry(radius, 12, 12),
      new THREE.MeshBasicMaterial({ color: colorHex }),
    );
    mesh.position.set(position[0], position[1], position[2]);
    this.markerGroup.add(mesh);
    this.markers.push({ mesh });
  }

  private clearMarkers(): void {
    for (const marker of this.markers) {
      this.markerGroup.remove(marker.mesh);
      marker.mesh.geometry.dispose();
      (marker.mesh.material as THREE.Material).dispose();
    }
    this.markers = [];
  }

  /** Wireframe box plus six draggable face handles (current view only). */
  setCropBox(box: CropBox | null): void {
    this.cropGroup.clear();
    this.cropHandles = [];
    this.cropBox = box;
    if (!box) return;
    const size = new THREE.Vector3(
      box.max[0] - box.min[0],
      box.max[1] - box.min[1],
      box.max[2] - box.min[2],
    );
    const center = new THREE.Vector3(
      (box.min[0] + box.max[0]) / 2,
      (box.min[1] + box.max[1]) / 2,
      (box.min[2] + box.max[2]) / 2,
    );
    const frameGeom = new THREE.BoxGeometry(
      Math.max(size.x, 1e-6),
      Math.max(size.y, 1e-6),
      Math.max(size.z, 1e-6),
    );
    const edges = new THREE.LineSegments(
      new THREE.EdgesGeometry(frameGeom),
      new THREE.LineBasicMaterial({ color: 0x4cc9f0 }),
    );
    edges.position.copy(center);
    this.cropGroup.add(edges);

    const handleRadius = this.sceneDiagonal / 90;
    const axisColors = [0xf94144, 0x90be6d, 0x577590];
    for (let axis = 0; axis < 3; axis++) {
      for (const side of [0, 1] as const) {
        const handle = new THREE.Mesh(
          new THREE.SphereGeometry(handleRadius, 10, 10),
          new THREE.MeshBasicMaterial({ color: axisColors[axis] }),
        );
        const position = center.clone();
        position.setComponent(axis, side === 0 ? box.min[axis] : box.max[axis]);
        handle.position.copy(position);
        handle.userData = { axis, side };
        this.cropGroup.add(handle);
        this.cropHandles.push(handle);
      }
    }
  }

  private pointerRay(event: PointerEvent): THREE.Raycaster {
    const rect = this.canvas.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const raycaster = new THREE.Raycaster();
    raycaster.setFromCamera(ndc, this.camera);
    return raycaster;
  }

  private pickAt(event: PointerEvent): HoverInfo | null {
    if (!this.frame) return null;
    const ray = this.pointerRay(event).ray;
    const hit = pickNearestPoint(
      this.frame.positions,
      this.frame.count,
      [ray.origin.x, ray.origin.y, ray.origin.z],
      [ray.direction.x, ray.direction.y, ray.direction.z],
      this.sceneDiagonal * PICK_RADIUS_FRACTION,
    );
    if (!hit) return null;
    const i = hit.index;
    return {
      index: i,
      position: [
        this.frame.positions[i * 3],
        this.frame.positions[i * 3 + 1],
        this.frame.positions[i * 3 + 2],
      ],
      color: [
        this.frame.colors[i * 3] / 255,
        this.frame.colors[i * 3 + 1] / 255,
        this.frame.colors[i * 3 + 2] / 255,
      ],
    };
  }

  private bindInput(): void {
    this.canvas.addEventListener("contextmenu", (e) => e.preventDefault());
    this.canvas.addEventListener("pointerdown", (event) => {
      this.canvas.setPointerCapture(event.pointerId);
      this.lastPointer = { x: event.clientX, y: event.clientY };
      if (event.button === 0 && this.cropHandles.length) {
        const hits = this.pointerRay(event).intersectObjects(this.cropHandles, false);
        if (hits.length) {
          const data = hits[0].object.userData as { axis: number; side: 0 | 1 };
          this.draggedHandle = data;
          return;
        }
      }
      if (event.button === 0 && event.shiftKey) {
        this.panning = true;
      } else if (event.button === 0) {
        this.rotating = true;
      } else if (event.button === 2) {
        this.panning = true;
      }
    });
    this.canvas.addEventListener("pointerup", (event) => {
      this.canvas.releasePointerCapture(event.pointerId);
      const wasInteracting = this.rotating || this.panning || this.draggedHandle !== null;
      const moved =
        Math.abs(event.clientX - this.lastPointer.x) + Math.abs(event.clientY - this.lastPointer.y);
      this.rotating = false;
      this.panning = false;
      this.draggedHandle = null;
      if ((!wasInteracting || moved < 3) && event.button === 0 && this.onPick) {
        const hit = this.pickAt(event);
        if (hit) this.onPick(hit, event);
      }
    });
    this.canvas.addEventListener("pointermove", (event) => {
      const dx = event.clientX - this.lastPointer.x;
      const dy = event.clientY - this.lastPointer.y;
      if (this.draggedHandle && this.cropBox) {
        this.dragCropHandle(event);
      } else if (this.rotating) {
        this.theta -= dx * 0.008;
        this.phi = Math.min(Math.PI - 0.05, Math.max(0.05, this.phi - dy * 0.008));
        this.lastPointer = { x: event.clientX, y: event.clientY };
        this.updateCamera();
      } else if (this.panning) {
        const scale = this.sphericalRadius * 0.0015;
        const right = new THREE.Vector3();
        const up = new THREE.Vector3(0, 0, 1);
        this.camera.getWorldDirection(right);
        right.cross(up).normalize();
        this.target.addScaledVector(right, -dx * scale);
        this.target.addScaledVector(up, dy * scale);
        this.lastPointer = { x: event.clientX, y: event.clientY };
        this.updateCamera();
      } else if (this.onHover) {
        this.onHover(this.pickAt(event));
      }
      if (this.rotating || this.panning) return;
      this.lastPointer = { x: event.clientX, y: event.clientY };
    });
    this.canvas.addEventListener("wheel", (event) => {
      event.preventDefault();
      this.sphericalRadius *= Math.exp(event.deltaY * 0.001);
      this.sphericalRadius = Math.max(this.sceneDiagonal * 0.1, this.sphericalRadius);
      this.updateCamera();
    });
  }

  private dragCropHandle(event: PointerEvent): void {
    if (!this.draggedHandle || !this.cropBox || !this.onCropEdit) return;
    const { axis, side } = this.draggedHandle;
    const ray = this.pointerRay(event).ray;
    // closest approach of the pointer ray to the handle's axis line
    const axisDir = new THREE.Vector3();
    axisDir.setComponent(axis, 1);
    const center = new THREE.Vector3(
      (this.cropBox.min[0] + this.cropBox.max[0]) / 2,
      (this.cropBox.min[1] + this.cropBox.max[1]) / 2,
      (this.cropBox.min[2] + this.cropBox.max[2]) / 2,
    );
    const lineOrigin = center.clone();
    lineOrigin.setComponent(axis, 0);
    const w0 = lineOrigin.clone().sub(ray.origin);
    const b = axisDir.dot(ray.direction);
    const d = axisDir.dot(w0);
    const e = ray.direction.dot(w0);
    const denom = 1 - b * b;
    if (Math.abs(denom) < 1e-9) return;
    const s = (b * e - d) / denom; // parameter along the axis line
    const next: CropBox = {
      min: [...this.cropBox.min] as Vec3,
      max: [...this.cropBox.max] as Vec3,
    };
    if (side === 0) next.min[axis] = Math.min(s, this.cropBox.max[axis]);
    else next.max[axis] = Math.max(s, this.cropBox.min[axis]);
    this.onCropEdit(next);
  }

  private updateCamera(): void {
    const sinPhi = Math.sin(this.phi);
    this.camera.position.set(
      this.target.x + this.sphericalRadius * sinPhi * Math.cos(this.theta),
      this.target.y + this.sphericalRadius * sinPhi * Math.sin(this.theta),
      this.target.z + this.sphericalRadius * Math.cos(this.phi),
    );
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(this.target);
  }
}
