/** Typed failures of the export shim. */

/** A checkpoint cannot be mapped onto the container format, or the
 * exported model disagrees with its source. */
export class ExportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ExportError";
  }
}

/** A caller-supplied argument is unusable (empty probe list, bad flag). */
export class InputError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "InputError";
  }
}
