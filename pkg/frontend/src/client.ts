/**
 * client.ts: typed client for the logitgraph HTTP service.
 *
 * Tensors travel as base64-encoded LGT1 bytes (the service's wire format
 * and the on-disk container are the same), report floats travel as JSON
 * numbers, which round-trip IEEE-754 doubles exactly. Service-side
 * errors surface as ServiceError carrying the library's message string
 * verbatim. Input buffers are only ever read, never mutated.
 */

import { toBase64, fromBase64 } from "./base64.js";

export interface LossConfig {
  lambda_gld?: number;
  lambda_uld?: number;
  lambda_sft?: number;
  top_k?: number;
  sparsify_mode?: "mask" | "gather";
  dtype?: "float32" | "float64";
}

export interface PerSourceLoss {
  source_id: number;
  uld: number;
  gld: number;
}

export interface LossReport {
  total: number;
  sft: number;
  per_source: PerSourceLoss[];
}

export interface FusedLossRequest {
  /** LGT1 bytes of the rank-3 pivot tensor. */
  pivot: Uint8Array;
  sources?: Uint8Array[];
  /** LGT1 bytes of the rank-2 targets tensor; negative entries are masked. */
  targets?: Uint8Array;
  config?: LossConfig;
  wantGradient?: boolean;
  seed?: number;
}

export interface FusedLossResult {
  report: LossReport;
  manifest: Record<string, unknown>;
  /** The report document exactly as the CLI writes it. */
  reportJson: string;
  /** LGT1 bytes of the pivot-shaped gradient, when requested. */
  gradient?: Uint8Array;
}

export interface GldGraphOptions {
  sample?: number;
  k?: number;
  mode?: "mask" | "gather";
  normalization?: "raw" | "row_stochastic";
}

export interface GldGraphResult {
  nodeIds: number[];
  C: number[][];
  normalization: string;
  /** The JSON artifact exactly as the CLI writes it. */
  text: string;
}

export interface VersionInfo {
  name: string;
  version: string;
  configDefaults: Required<LossConfig>;
}

export class ServiceError extends Error {
  readonly errorType: string;
  readonly exitCode: number;

  constructor(errorType: string, message: string, exitCode: number) {
    super(message);
    this.name = "ServiceError";
    this.errorType = errorType;
    this.exitCode = exitCode;
  }
}

export class LogitGraphClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async post(path: string, body: unknown): Promise<any> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      let errorType = "LogitGraphError";
      let message = `server error ${resp.status}`;
      let exitCode = 1;
      try {
        const doc = await resp.json();
        errorType = doc.error_type ?? errorType;
        message = doc.message ?? message;
        exitCode = doc.exit_code ?? exitCode;
      } catch {
        // non-JSON error body: keep the status-line message
      }
      throw new ServiceError(errorType, message, exitCode);
    }
    return resp.json();
  }

  async version(): Promise<VersionInfo> {
    const resp = await fetch(`${this.baseUrl}/v1/version`);
    if (!resp.ok) {
      throw new ServiceError("LogitGraphError", `server error ${resp.status}`, 1);
    }
    const doc = await resp.json();
    return {
      name: doc.name,
      version: doc.version,
      configDefaults: doc.config_defaults,
    };
  }

  /** The combined distillation objective with its pivot gradient. */
  async fusedLoss(req: FusedLossRequest): Promise<FusedLossResult> {
    const body = {
      pivot: toBase64(req.pivot),
      sources: (req.sources ?? []).map(toBase64),
      targets: req.targets ? toBase64(req.targets) : null,
      config: req.config ?? null,
      want_gradient: req.wantGradient ?? true,
      seed: req.seed ?? 0,
    };
    const doc = await this.post("/v1/compute", body);
    return {
      report: doc.report,
      manifest: doc.manifest,
      reportJson: doc.report_json,
      gradient: doc.gradient ? fromBase64(doc.gradient) : undefined,
    };
  }

  /** Co-activation graph of one sample, for inspection. */
  async gldGraph(tensor: Uint8Array, opts: GldGraphOptions = {}): Promise<GldGraphResult> {
    const body = {
      tensor: toBase64(tensor),
      sample: opts.sample ?? 0,
      k: opts.k ?? 10,
      mode: opts.mode ?? "mask",
      normalization: opts.normalization ?? "raw",
      format: "json",
    };
    const doc = await this.post("/v1/graph-export", body);
    return {
      nodeIds: doc.graph.node_ids,
      C: doc.graph.C,
      normalization: doc.graph.normalization,
      text: doc.text,
    };
  }
}
