/**
 * Binding-parity suite: every client result must match the CLI's golden
 * artifacts bit-exactly in float64 on the shipped fixtures, with service
 * error messages surfaced verbatim.
 *
 * The suite boots the Python service as a child process; fixtures live in
 * the repository's fixtures/ directory one level above this package.
 */

import assert from "node:assert/strict";
import { spawn, type ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { after, before, test } from "node:test";

import { decodeTensor, LogitGraphClient, ServiceError } from "../src/index.js";

const PKG_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");
const FIXTURES = process.env.LOGITGRAPH_FIXTURES ?? path.join(PKG_ROOT, "..", "fixtures");
const PORT = Number(process.env.LOGITGRAPH_PORT ?? 8461);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
const client = new LogitGraphClient(BASE);

function fixture(name: string): Uint8Array {
  return new Uint8Array(readFileSync(path.join(FIXTURES, name)));
}

function fixtureText(name: string): string {
  return readFileSync(path.join(FIXTURES, name), "utf8");
}

before(async () => {
  server = spawn("python3", ["-m", "logitgraph.service", "--port", String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  for (let attempt = 0; attempt < 120; attempt++) {
    try {
      const info = await client.version();
      if (info.name === "logitgraph") return;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 500));
    }
  }
  throw new Error("service did not become ready");
});

after(() => {
  server?.kill();
});

test("version and config introspection", async () => {
  const info = await client.version();
  assert.equal(info.name, "logitgraph");
  assert.equal(info.configDefaults.lambda_uld, 0.5);
  assert.equal(info.configDefaults.lambda_gld, 0.001);
  assert.equal(info.configDefaults.top_k, 10);
});

test("fusedLoss matches the CLI golden report byte for byte", async () => {
  const config = JSON.parse(fixtureText("config.json"));
  const result = await client.fusedLoss({
    pivot: fixture("pivot.lgt1"),
    sources: [fixture("source_a.lgt1"), fixture("source_b.lgt1")],
    targets: fixture("targets.lgt1"),
    config,
    wantGradient: true,
  });
  assert.equal(result.reportJson, fixtureText("golden_report.json"));

  const golden = JSON.parse(fixtureText("golden_report.json"));
  assert.equal(result.report.total, golden.report.total);
  assert.equal(result.report.sft, golden.report.sft);
  assert.equal(result.report.per_source.length, golden.report.per_source.length);
  for (let i = 0; i < golden.report.per_source.length; i++) {
    assert.equal(result.report.per_source[i].uld, golden.report.per_source[i].uld);
    assert.equal(result.report.per_source[i].gld, golden.report.per_source[i].gld);
  }
});

test("fusedLoss gradient bytes equal the golden gradient tensor", async () => {
  const result = await client.fusedLoss({
    pivot: fixture("pivot.lgt1"),
    sources: [fixture("source_a.lgt1"), fixture("source_b.lgt1")],
    targets: fixture("targets.lgt1"),
    config: JSON.parse(fixtureText("config.json")),
    wantGradient: true,
  });
  const golden = fixture("golden_gradient.lgt1");
  assert.ok(result.gradient, "gradient requested but absent");
  assert.deepEqual(Array.from(result.gradient!), Array.from(golden));
  const grad = decodeTensor(result.gradient!);
  const pivot = decodeTensor(fixture("pivot.lgt1"));
  assert.deepEqual(grad.shape, pivot.shape);
  assert.equal(grad.dtype, pivot.dtype);
});

test("zero-weight config returns zero loss and zero gradient", async () => {
  const result = await client.fusedLoss({
    pivot: fixture("pivot.lgt1"),
    sources: [fixture("source_a.lgt1")],
    config: { lambda_gld: 0, lambda_uld: 0, lambda_sft: 0 },
    wantGradient: true,
  });
  assert.equal(result.report.total, 0);
  const grad = decodeTensor(result.gradient!);
  for (const x of grad.data) assert.equal(x, 0);
});

test("gldGraph matches the CLI golden graph exactly", async () => {
  const result = await client.gldGraph(fixture("pivot.lgt1"), { sample: 0, k: 3 });
  assert.equal(result.text, fixtureText("golden_graph.json"));
  const golden = JSON.parse(fixtureText("golden_graph.json"));
  assert.deepEqual(result.nodeIds, golden.node_ids);
  assert.equal(result.normalization, golden.normalization);
  for (let i = 0; i < golden.C.length; i++) {
    for (let j = 0; j < golden.C.length; j++) {
      assert.equal(result.C[i][j], golden.C[i][j]);
    }
  }
});

test("k above the vocabulary yields the full gram graph", async () => {
  const result = await client.gldGraph(fixture("pivot.lgt1"), { sample: 0, k: 999 });
  const pivot = decodeTensor(fixture("pivot.lgt1"));
  assert.equal(result.nodeIds.length, pivot.shape[2]);
});

test("service errors carry the library message verbatim", async () => {
  const garbage = new Uint8Array([0x58, 0x58, 0x58, 0x58, 1, 1, 0, 0]);
  await assert.rejects(
    client.fusedLoss({ pivot: garbage }),
    (err: unknown) => {
      assert.ok(err instanceof ServiceError);
      assert.equal(err.errorType, "FormatError");
      assert.equal(err.exitCode, 2);
      assert.match(err.message, /bad magic/);
      return true;
    },
  );
});

test("wrong-rank tensor is rejected at the boundary", async () => {
  await assert.rejects(
    client.fusedLoss({ pivot: fixture("targets.lgt1") }),
    (err: unknown) => {
      assert.ok(err instanceof ServiceError);
      assert.equal(err.errorType, "ShapeError");
      assert.equal(err.exitCode, 3);
      return true;
    },
  );
});

test("calls never mutate caller buffers", async () => {
  const pivot = fixture("pivot.lgt1");
  const snapshot = Array.from(pivot);
  await client.fusedLoss({ pivot, sources: [fixture("source_a.lgt1")] });
  await client.gldGraph(pivot, { k: 3 });
  assert.deepEqual(Array.from(pivot), snapshot);
});
