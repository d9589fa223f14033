// The chart library is loaded as a plain <script> (vendored UMD build), so
// only the surface this app touches is declared here.
interface ChartDataset {
  label: string;
  data: { x: number; y: number }[];
  borderColor?: string;
  backgroundColor?: string;
  pointRadius?: number;
  tension?: number;
}

declare class Chart {
  constructor(
    ctx: HTMLCanvasElement,
    config: {
      type: string;
      data: { datasets: ChartDataset[] };
      options?: Record<string, unknown>;
    },
  );
  data: { datasets: ChartDataset[] };
  update(mode?: string): void;
  destroy(): void;
}
