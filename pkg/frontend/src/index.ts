export { ExportError, InputError } from "./errors.js";
export { Tensor, randomTensor, rng, sizeOf, tensor } from "./tensor.js";
export {
  CHECKPOINT_FORMAT,
  Checkpoint,
  CheckpointLayer,
  loadCheckpoint,
  parseCheckpoint,
  weightTensor,
} from "./checkpoint.js";
export { NormalLayer, normalizeLayer } from "./layers.js";
export { endsWithSoftmax, inferShapes, runForward } from "./forward.js";
export {
  Container,
  ExportOptions,
  ExportReport,
  LayerMapping,
  basePath,
  buildContainer,
  exportModel,
  formatReport,
} from "./export.js";
export { verifyRoundtrip, writeRaw32 } from "./verify.js";
export { canonicalJson } from "./canonical.js";
export { crc32 } from "./crc32.js";
