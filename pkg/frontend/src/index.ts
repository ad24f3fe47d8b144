export {
  decodeTensor,
  encodeTensor,
  elementCount,
  logitTensor,
  Lgt1FormatError,
  Lgt1ValidationError,
} from "./lgt1.js";
export type { Dtype, Tensor } from "./lgt1.js";
export { fromBase64, toBase64 } from "./base64.js";
export { LogitGraphClient, ServiceError } from "./client.js";
export type {
  FusedLossRequest,
  FusedLossResult,
  GldGraphOptions,
  GldGraphResult,
  LossConfig,
  LossReport,
  PerSourceLoss,
  VersionInfo,
} from "./client.js";
