import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import { FakeServer, docPayload } from "./fakeServer";

function makeClient(server = new FakeServer()) {
  return { server, client: new ApiClient("", server.fetch) };
}

describe("ApiClient", () => {
  it("reports health", async () => {
    const { client } = makeClient();
    expect(await client.health()).toBe(true);
  });

  it("uploads documents and returns ids", async () => {
    const { client } = makeClient();
    const resp = await client.uploadDocument(docPayload("doc-1"));
    expect(resp.doc_id).toBe("doc-1");
    expect(resp.tokens).toBe(2);
  });

  it("surfaces server error details verbatim", async () => {
    const { client } = makeClient();
    await expect(client.uploadDocument("{broken")).rejects.toMatchObject({
      status: 400,
      detail: "payload is not valid JSON",
    });
  });

  it("404s propagate with the server reason", async () => {
    const { client } = makeClient();
    const err = await client.getResult("ghost").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
  });

  it("treats a missing required field as a malformed response", async () => {
    const bad: typeof fetch = async () =>
      new Response(JSON.stringify({ not_doc_id: "x" }), { status: 200 });
    const client = new ApiClient("", bad);
    await expect(client.uploadDocument(docPayload("d"))).rejects.toThrow(
      /missing "doc_id"/,
    );
  });

  it("ignores unknown response fields", async () => {
    const noisy: typeof fetch = async () =>
      new Response(
        JSON.stringify({ doc_id: "d", pages: 1, tokens: 2, extra: "ignored" }),
        { status: 200 },
      );
    const client = new ApiClient("", noisy);
    const resp = await client.uploadDocument(docPayload("d"));
    expect(resp.doc_id).toBe("d");
  });

  it("creates and polls jobs", async () => {
    const { client } = makeClient();
    await client.uploadDocument(docPayload("doc-1"));
    const jobId = await client.createJob(["doc-1"]);
    let job = await client.getJob(jobId);
    expect(["QUEUED", "RUNNING", "DONE"]).toContain(job.status);
    for (let i = 0; i < 10 && job.status !== "DONE"; i++) {
      job = await client.getJob(jobId);
    }
    expect(job.status).toBe("DONE");
    expect(job.report?.processed).toEqual(["doc-1"]);
  });

  it("unknown doc ids are rejected at job creation", async () => {
    const { client } = makeClient();
    await expect(client.createJob(["nope"])).rejects.toMatchObject({
      status: 404,
    });
  });
});
