/**
 * WebGL point-cloud renderer: single dynamic buffer pair re-uploaded when the
 * cache version changes, square point sprites sized by inverse depth.
 */

import { ClientSceneCache } from "./cache.js";
import { FirstPersonCamera } from "./camera.js";

const VERT = `
attribute vec3 aPosition;
attribute vec3 aColor;
uniform mat4 uView;
uniform mat4 uProj;
varying vec3 vColor;
void main() {
  vec4 cam = uView * vec4(aPosition, 1.0);
  gl_Position = uProj * cam;
  float size = 240.0 / max(cam.z, 0.2);
  gl_PointSize = clamp(size * 0.02, 1.5, 7.0);
  vColor = aColor / 255.0;
}`;

const FRAG = `
precision mediump float;
varying vec3 vColor;
void main() {
  gl_FragColor = vec4(vColor, 1.0);
}`;

export class PointRenderer {
  private gl: WebGLRenderingContext;
  private program: WebGLProgram;
  private posBuf: WebGLBuffer;
  private colBuf: WebGLBuffer;
  private count = 0;
  private uploadedVersion = -1;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl");
    if (!gl) throw new Error("WebGL unavailable");
    this.gl = gl;
    this.program = this.buildProgram(VERT, FRAG);
    this.posBuf = gl.createBuffer()!;
    this.colBuf = gl.createBuffer()!;
    gl.enable(gl.DEPTH_TEST);
  }

  private buildProgram(vs: string, fs: string): WebGLProgram {
    const gl = this.gl;
    const compile = (type: number, src: string) => {
      const sh = gl.createShader(type)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(sh) ?? "shader compile failed");
      }
      return sh;
    };
    const prog = gl.createProgram()!;
    gl.attachShader(prog, compile(gl.VERTEX_SHADER, vs));
    gl.attachShader(prog, compile(gl.FRAGMENT_SHADER, fs));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(prog) ?? "program link failed");
    }
    return prog;
  }

  sync(cache: ClientSceneCache): void {
    if (cache.version === this.uploadedVersion) return;
    const { positions, colors, count } = cache.flatten();
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.posBuf);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.DYNAMIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colBuf);
    gl.bufferData(gl.ARRAY_BUFFER, colors, gl.DYNAMIC_DRAW);
    this.count = count;
    this.uploadedVersion = cache.version;
  }

  draw(camera: FirstPersonCamera, fovH: number): void {
    const gl = this.gl;
    const w = this.canvas.clientWidth || this.canvas.width;
    const h = this.canvas.clientHeight || this.canvas.height;
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.canvas.width = w;
      this.canvas.height = h;
    }
    gl.viewport(0, 0, w, h);
    gl.clearColor(0.03, 0.03, 0.05, 1.0);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (this.count === 0) return;

    gl.useProgram(this.program);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.program, "uView"), false,
                        camera.viewMatrix());
    gl.uniformMatrix4fv(gl.getUniformLocation(this.program, "uProj"), false,
                        projection(fovH, w / h));

    const aPos = gl.getAttribLocation(this.program, "aPosition");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.posBuf);
    gl.enableVertexAttribArray(aPos);
    gl.vertexAttribPointer(aPos, 3, gl.FLOAT, false, 0, 0);

    const aCol = gl.getAttribLocation(this.program, "aColor");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colBuf);
    gl.enableVertexAttribArray(aCol);
    gl.vertexAttribPointer(aCol, 3, gl.UNSIGNED_BYTE, false, 0, 0);

    gl.drawArrays(gl.POINTS, 0, this.count);
  }
}

/**
 * Column-major perspective projection for the y-down camera frame: y flips
 * into clip space, z maps [near, far] onto [-1, 1].
 */
export function projection(fovH: number, aspect: number, near = 0.05,
                           far = 50.0): Float32Array {
  const fx = 1.0 / Math.tan(fovH / 2);
  const fy = fx * aspect;
  const a = (far + near) / (far - near);
  const b = -2 * far * near / (far - near);
  return new Float32Array([
    fx, 0, 0, 0,
    0, -fy, 0, 0,
    0, 0, a, 1,
    0, 0, b, 0,
  ]);
}
