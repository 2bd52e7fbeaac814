/** Canvas painter for scene draw ops. World frame: +x right, +y up. */

import { DrawOp } from "./scene.js";

const COLORS = {
  robot: "#4ec9b0",
  agent: "#d16969",
  goal: "#dcdcaa",
  planned: "#569cd6",
  text: "#cccccc",
  banner: "#f14c4c",
  gaugeOp: "#c586c0",
  gaugeRobot: "#4ec9b0",
};

export class Painter {
  private scale = 60; // px per meter
  private cx = 0;
  private cy = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {}

  private toPx(x: number, y: number): [number, number] {
    return [this.canvas.width / 2 + (x - this.cx) * this.scale,
            this.canvas.height / 2 - (y - this.cy) * this.scale];
  }

  paint(ops: DrawOp[]): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null) {
      return;
    }
    // keep the robot roughly centered
    for (const op of ops) {
      if (op.kind === "circle" && op.style === "robot") {
        this.cx += 0.1 * (op.x - this.cx);
        this.cy += 0.1 * (op.y - this.cy);
      }
    }
    ctx.fillStyle = "#1e1e1e";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    let bannerRow = 0;
    for (const op of ops) {
      switch (op.kind) {
        case "path": {
          ctx.strokeStyle = COLORS.planned;
          ctx.lineWidth = 2;
          ctx.beginPath();
          op.points.forEach(([x, y], i) => {
            const [px, py] = this.toPx(x, y);
            if (i === 0) { ctx.moveTo(px, py); } else { ctx.lineTo(px, py); }
          });
          ctx.stroke();
          break;
        }
        case "circle": {
          const [px, py] = this.toPx(op.x, op.y);
          ctx.fillStyle = COLORS[op.style];
          ctx.beginPath();
          ctx.arc(px, py, op.r * this.scale, 0, 2 * Math.PI);
          if (op.style === "goal") {
            ctx.strokeStyle = COLORS.goal;
            ctx.lineWidth = 2;
            ctx.stroke();
          } else {
            ctx.fill();
          }
          break;
        }
        case "heading": {
          const [px, py] = this.toPx(op.x, op.y);
          const [qx, qy] = this.toPx(op.x + op.len * Math.cos(op.theta),
                                     op.y + op.len * Math.sin(op.theta));
          ctx.strokeStyle = COLORS.robot;
          ctx.lineWidth = 3;
          ctx.beginPath();
          ctx.moveTo(px, py);
          ctx.lineTo(qx, qy);
          ctx.stroke();
          break;
        }
        case "gauge": {
          const w = this.canvas.width - 40;
          ctx.fillStyle = COLORS.gaugeRobot;
          ctx.fillRect(20, 12, w, 14);
          ctx.fillStyle = COLORS.gaugeOp;
          ctx.fillRect(20, 12, w * op.operator, 14);
          ctx.fillStyle = COLORS.text;
          ctx.font = "12px monospace";
          ctx.fillText(`operator ${(op.operator * 100).toFixed(0)}%`, 20, 40);
          const robotLabel = `robot ${(op.robot * 100).toFixed(0)}%`;
          ctx.fillText(robotLabel, 20 + w - ctx.measureText(robotLabel).width, 40);
          break;
        }
        case "label": {
          const el = document.getElementById(`hud-${op.id}`);
          if (el !== null) {
            el.textContent = op.text;
          }
          break;
        }
        case "banner": {
          ctx.fillStyle = COLORS.banner;
          ctx.font = "bold 22px monospace";
          ctx.fillText(op.text, 20, 80 + 28 * bannerRow);
          bannerRow += 1;
          break;
        }
      }
    }
  }
}
